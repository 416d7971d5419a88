#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "mqr/scoring.hpp"
#include "test_util.hpp"

using namespace mqr;
using testutil::MappingFixture;
using testutil::random_queries;

namespace {

double col_norm(const MatF& m, std::size_t j) {
  double sq = 0.0;
  for (std::size_t i = 0; i < m.rows; ++i)
    sq += static_cast<double>(m.at(i, j)) * m.at(i, j);
  return std::sqrt(sq);
}

}  // namespace

TEST_SUITE("scoring") {

TEST_CASE("bound_constrain: below the bound is untouched bitwise") {
  QueryBlock q{MatF(2, 1)};
  q.f.at(0, 0) = 30.f;
  q.f.at(1, 0) = 40.f;  // norm 50
  const auto b = bound_constrain(q, 100.f);
  CHECK(b.f == q.f);
  CHECK(b.bound == 100.f);
}

TEST_CASE("bound_constrain: norm 200 scales by exactly one half") {
  QueryBlock q{MatF(2, 1)};
  q.f.at(0, 0) = 120.f;
  q.f.at(1, 0) = 160.f;  // norm 200
  const auto b = bound_constrain(q, 100.f);
  CHECK(b.f.at(0, 0) == 60.f);
  CHECK(b.f.at(1, 0) == 80.f);
  CHECK(col_norm(b.f, 0) == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("bound_constrain: default bound is 100") {
  CHECK(kDefaultBound == 100.f);
}

TEST_CASE("bound_constrain: idempotent and capped exactly, random blocks") {
  SplitMix64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng.bounded(8), m = 1 + rng.bounded(4);
    const double scale = std::pow(10.0, static_cast<double>(rng.bounded(5)) - 1.0);
    QueryBlock q{MatF(d, m)};
    for (auto& v : q.f.data) v = static_cast<float>(scale * rng.normal());
    const float bound = 1.f + static_cast<float>(rng.bounded(100));
    const auto once = bound_constrain(q, bound);
    for (std::size_t j = 0; j < m; ++j)
      CHECK(col_norm(once.f, j) <= static_cast<double>(bound));
    const auto twice = bound_constrain(QueryBlock{once.f}, bound);
    CHECK(twice.f == once.f);
  }
}

TEST_CASE("bound_constrain: direction preserved on the scaled branch") {
  auto q = random_queries(6, 3, 11, 200.0);
  const auto b = bound_constrain(q, 5.f);
  for (std::size_t j = 0; j < 3; ++j) {
    const double n_orig = col_norm(q.f, j), n_new = col_norm(b.f, j);
    double cos = 0.0;
    for (std::size_t i = 0; i < 6; ++i)
      cos += static_cast<double>(q.f.at(i, j)) * b.f.at(i, j);
    cos /= n_orig * n_new;
    CHECK(cos == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("bound_constrain: rejects non-finite input and bad bound") {
  QueryBlock q{MatF(2, 1)};
  q.f.at(0, 0) = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(bound_constrain(q, 100.f), std::runtime_error);
  QueryBlock ok{MatF(2, 1)};
  CHECK_THROWS_AS(bound_constrain(ok, 0.f), std::invalid_argument);
}

TEST_CASE("project_queries: identity U with head_norm off is bitwise identity") {
  MappingFixture fix;
  fix.init(3, 4, 4, 2, 21, /*head_norm=*/false);
  fix.mapping.u = MatF(4, 4);
  for (std::size_t i = 0; i < 4; ++i) fix.mapping.u.at(i, i) = 1.f;
  const auto q = random_queries(4, 3, 22);
  const auto bounded = bound_constrain(q, 100.f);
  const auto proj = project_queries(fix.mapping, bounded);
  CHECK(proj.f == bounded.f);
}

TEST_CASE("project_queries: zero U maps to zero") {
  MappingFixture fix;
  fix.init(3, 4, 2, 2, 23, false);
  fix.mapping.u = MatF(4, 2);
  const auto proj =
      project_queries(fix.mapping, bound_constrain(random_queries(4, 2, 24), 100.f));
  for (float v : proj.f.data) CHECK(v == 0.f);
}

TEST_CASE("project_queries: matches the naive triple-loop oracle") {
  MappingFixture fix;
  fix.init(2, 4, 2, 2, 25, false);
  const auto q = random_queries(4, 3, 26);
  const auto bounded = bound_constrain(q, 100.f);
  const auto proj = project_queries(fix.mapping, bounded);

  // Independent dense matmul oracle in doubles.
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < 4; ++i)
        acc += static_cast<double>(fix.mapping.u.at(i, k)) * bounded.f.at(i, j);
      CHECK(std::abs(proj.f.at(k, j) - acc) < 1e-6);
    }
}

TEST_CASE("project_queries: RMS normalization fixes the column scale") {
  MappingFixture fix;
  fix.init(2, 6, 4, 2, 27, /*head_norm=*/true);
  const auto bounded = bound_constrain(random_queries(6, 2, 28), 100.f);
  MatF pre;
  std::vector<float> rms;
  const auto proj = project_queries_traced(fix.mapping, bounded, pre, rms);
  for (std::size_t j = 0; j < 2; ++j) {
    double mean_sq = 0.0;
    for (std::size_t k = 0; k < 4; ++k)
      mean_sq += static_cast<double>(pre.at(k, j)) * pre.at(k, j) / 4.0;
    CHECK(rms[j] == doctest::Approx(std::sqrt(mean_sq + kRmsEps)).epsilon(1e-5));
    for (std::size_t k = 0; k < 4; ++k)
      CHECK(proj.f.at(k, j) == doctest::Approx(pre.at(k, j) / rms[j]).epsilon(1e-5));
  }
}

TEST_CASE("project_queries: shape mismatch throws") {
  MappingFixture fix;
  fix.init(2, 4, 2, 2, 29, false);
  CHECK_THROWS_AS(
      project_queries(fix.mapping, bound_constrain(random_queries(5, 1, 30), 100.f)),
      std::runtime_error);
}

TEST_CASE("score_items: frozen hand example") {
  // Rows (1,2), (0,1), (-1,0); projected columns (1,0) and (0,1).
  MappingFixture fix;
  fix.init(3, 2, 2, 1, 31, false);
  fix.mapping.v_dis.data = {1.f, 2.f, 0.f, 1.f, -1.f, 0.f};
  fix.mapping.p_trans = MatF(1, 2);  // zero: effective row == V_dis row
  ProjectedQueryBlock proj{MatF(2, 2)};
  proj.f.at(0, 0) = 1.f;
  proj.f.at(1, 1) = 1.f;
  const ItemId ids[] = {0, 1, 2};
  const auto sv = score_items(fix.mapping, ids, proj);
  REQUIRE(sv.size() == 3);
  CHECK(sv.scores[0] == 2.f);  // max(1, 2)
  CHECK(sv.scores[1] == 1.f);  // max(0, 1)
  CHECK(sv.scores[2] == 0.f);  // max(-1, 0)
}

TEST_CASE("score_items: single query column reduces to the plain inner product") {
  MappingFixture fix;
  fix.init(20, 5, 3, 2, 32, false);
  ProjectedQueryBlock proj{MatF(3, 1)};
  SplitMix64 rng(33);
  for (auto& v : proj.f.data) v = static_cast<float>(rng.normal());
  std::vector<ItemId> ids(20);
  for (ItemId i = 0; i < 20; ++i) ids[i] = i;
  const auto sv = score_items(fix.mapping, ids, proj);
  std::vector<float> row(3);
  for (ItemId i = 0; i < 20; ++i) {
    effective_item_row(fix.mapping, i, RowMode::sum, row);
    const float expected = static_cast<float>(dot_f64(row, proj.f.data));
    CHECK(sv.scores[i] == expected);
  }
}

TEST_CASE("score_items: zero queries give zero scores; empty subset is empty") {
  MappingFixture fix;
  fix.init(4, 3, 2, 2, 34, false);
  ProjectedQueryBlock proj{MatF(2, 3)};
  const ItemId ids[] = {0, 2};
  const auto sv = score_items(fix.mapping, ids, proj);
  CHECK(sv.scores == std::vector<float>{0.f, 0.f});
  const auto empty = score_items(fix.mapping, {}, proj);
  CHECK(empty.size() == 0);
}

TEST_CASE("softmax_tau: uniform scores, dominance, and defaults") {
  const float same[] = {1.f, 1.f, 1.f};
  for (double tau : {0.07, 1.0, 5.0}) {
    const auto p = softmax_tau(same, tau);
    for (double v : p) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));
  }
  const float gap[] = {2.f, 0.f};
  const auto p = softmax_tau(gap, 0.07);
  CHECK(p[0] > 0.999999);
  CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(kDefaultTau == 0.07);
}

TEST_CASE("softmax_tau: sums to one, stays positive, keeps the argmax") {
  SplitMix64 rng(35);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<float> s(1 + rng.bounded(50));
    // Gaps stay under ~400 nats so every entry is representable in double.
    for (auto& v : s) v = static_cast<float>(5.0 * rng.normal());
    const double tau = 0.1 + rng.uniform01();
    const auto p = softmax_tau(s, tau);
    double sum = 0.0;
    for (double v : p) {
      CHECK(v > 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    const auto arg_s = std::max_element(s.begin(), s.end()) - s.begin();
    const auto arg_p = std::max_element(p.begin(), p.end()) - p.begin();
    CHECK(s[static_cast<std::size_t>(arg_p)] == s[static_cast<std::size_t>(arg_s)]);
  }
  CHECK_THROWS_AS(softmax_tau({}, 0.07), std::invalid_argument);
  const float one[] = {1.f};
  CHECK_THROWS_AS(softmax_tau(one, 0.0), std::invalid_argument);
}

TEST_CASE("full_distribution: degenerate and symmetric cases") {
  MappingFixture fix;
  fix.init(1, 3, 2, 2, 36, false);
  const auto bounded = bound_constrain(random_queries(3, 2, 37), 100.f);
  const auto p1 = full_distribution(fix.mapping, bounded, 0.07);
  REQUIRE(p1.size() == 1);
  CHECK(p1[0] == 1.0);

  MappingFixture same;
  same.init(5, 3, 2, 2, 38, false);
  for (ItemId i = 1; i < 5; ++i) {
    for (std::size_t k = 0; k < 2; ++k)
      same.mapping.v_dis.at(i, k) = same.mapping.v_dis.at(0, k);
    same.text.row(i)[0] = same.text.row(0)[0];
    same.text.row(i)[1] = same.text.row(0)[1];
  }
  const auto p = full_distribution(same.mapping, bounded, 0.07);
  for (double v : p) CHECK(v == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("full scores restricted to a subset agree with score_items") {
  MappingFixture fix;
  fix.init(200, 8, 4, 3, 39, true);
  const auto bounded = bound_constrain(random_queries(8, 3, 40), 100.f);
  const auto all = full_scores(fix.mapping, bounded);
  const auto proj = project_queries(fix.mapping, bounded);
  SplitMix64 rng(41);
  std::vector<ItemId> subset;
  for (int i = 0; i < 50; ++i) subset.push_back(static_cast<ItemId>(rng.bounded(200)));
  const auto sv = score_items(fix.mapping, subset, proj);
  for (std::size_t i = 0; i < subset.size(); ++i)
    CHECK(std::abs(sv.scores[i] - all[subset[i]]) <= 1e-6);
}

TEST_CASE("effective_item_row: modes and errors") {
  MappingFixture fix;
  fix.init(4, 3, 2, 2, 42, false);

  SUBCASE("sum with zero P_trans equals the V_dis row") {
    fix.mapping.p_trans = MatF(2, 2);
    std::vector<float> row(2);
    effective_item_row(fix.mapping, 1, RowMode::sum, row);
    CHECK(row[0] == fix.mapping.v_dis.at(1, 0));
    CHECK(row[1] == fix.mapping.v_dis.at(1, 1));
  }

  SUBCASE("trans mode is nonzero iff the text projection is nonzero") {
    std::vector<float> row(2);
    effective_item_row(fix.mapping, 2, RowMode::trans, row);
    CHECK((std::abs(row[0]) + std::abs(row[1])) > 0.f);
    fix.mapping.p_trans = MatF(2, 2);
    effective_item_row(fix.mapping, 2, RowMode::trans, row);
    CHECK(row[0] == 0.f);
    CHECK(row[1] == 0.f);
  }

  SUBCASE("out-of-range id") {
    std::vector<float> row(2);
    CHECK_THROWS_AS(effective_item_row(fix.mapping, 7, RowMode::dis, row),
                    std::out_of_range);
  }
}

TEST_CASE("continuity: scores of nearby items differ by at most eps*B") {
  // Property-scale check here; the acceptance suite runs the full 1000 draws.
  SplitMix64 rng(43);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 2 + rng.bounded(6), h = 1 + rng.bounded(4);
    MappingFixture fix;
    fix.init(2, d, h, 2, rng.next(), false);
    // v2 = v1 + small delta through V_dis; identical text rows
    for (std::size_t k = 0; k < h; ++k)
      fix.mapping.v_dis.at(1, k) =
          fix.mapping.v_dis.at(0, k) + static_cast<float>(0.01 * rng.normal());
    for (std::size_t g = 0; g < 2; ++g) fix.text.row(1)[g] = fix.text.row(0)[g];

    const float bound = 100.f;
    const auto q = random_queries(d, 1 + rng.bounded(4), rng.next(), 60.0);
    const auto bounded = bound_constrain(q, bound);
    const auto proj = project_queries(fix.mapping, bounded);
    const ItemId ids[] = {0, 1};
    const auto sv = score_items(fix.mapping, ids, proj);

    // eps = ||U v1 - U v2|| in doubles.
    std::vector<float> r0(h), r1(h);
    effective_item_row(fix.mapping, 0, RowMode::sum, r0);
    effective_item_row(fix.mapping, 1, RowMode::sum, r1);
    double eps_sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double di = 0.0;
      for (std::size_t k = 0; k < h; ++k)
        di += static_cast<double>(fix.mapping.u.at(i, k)) * (r0[k] - r1[k]);
      eps_sq += di * di;
    }
    const double eps = std::sqrt(eps_sq);
    CHECK(std::abs(sv.scores[0] - sv.scores[1]) <= eps * bound + 1e-6);
  }
}

TEST_CASE("URMM: byte-exact round trip, corruption detection, truncation") {
  MappingFixture fix;
  fix.init(6, 4, 3, 2, 44, false);
  const auto dir = std::filesystem::temp_directory_path() / "mqr_scoring_tests";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "map.urmm").string();
  save_mapping(fix.mapping, path);

  const auto loaded = load_mapping(path);
  CHECK(loaded.u == fix.mapping.u);
  CHECK(loaded.v_dis == fix.mapping.v_dis);
  CHECK(loaded.p_trans == fix.mapping.p_trans);

  const auto again = (dir / "map2.urmm").string();
  save_mapping(loaded, again);
  CHECK(read_file_bytes(path) == read_file_bytes(again));

  std::string bytes = read_file_bytes(path);
  bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x01);
  write_file_bytes(path, bytes);
  CHECK_THROWS_WITH_AS(load_mapping(path), doctest::Contains("CRC"),
                       std::runtime_error);

  write_file_bytes(path, bytes.substr(0, 10));
  CHECK_THROWS_AS(load_mapping(path), std::runtime_error);

  write_file_bytes(path, std::string("XXXX") + bytes.substr(4));
  CHECK_THROWS_WITH_AS(load_mapping(path), doctest::Contains("magic"),
                       std::runtime_error);
}

}  // TEST_SUITE
