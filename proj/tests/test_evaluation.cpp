#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "cpreg/error.hpp"
#include "cpreg/evaluation.hpp"

using namespace cpreg;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

RunResult run(double width, double coverage, std::uint64_t seed = 0, std::size_t k = 10,
              EstimatorKind kind = EstimatorKind::knn_target_std, Variant v = Variant::plain, std::size_t bins = 0) {
  RunResult r;
  r.config.estimator = kind;
  r.config.variant = v;
  r.config.k = k;
  r.config.bins = bins;
  r.seed = seed;
  r.mean_width = width;
  r.coverage = coverage;
  r.n_test = 100;
  return r;
}

EvaluationSummary summary(double width, std::size_t k, std::size_t bins = 0,
                          EstimatorKind kind = EstimatorKind::knn_target_std, Variant v = Variant::plain) {
  EvaluationSummary s;
  s.config.estimator = kind;
  s.config.variant = v;
  s.config.k = k;
  s.config.bins = bins;
  s.stats = SummaryStats{width, 0.0, 0.9};
  s.n_runs_aggregated = s.n_runs_total = 1;
  return s;
}

}  // namespace

TEST_CASE("effective coverage counts closed intervals", "[evaluation]") {
  const std::vector<PredictionInterval> pis{{0, 2, 0.9}, {0, 1, 0.9}, {2, 4, 0.9}};
  CHECK(effective_coverage(pis, std::vector<double>{1, 2, 3}) == Catch::Approx(2.0 / 3.0));

  const std::vector<PredictionInterval> open{{-kInf, kInf, 0.9}, {-kInf, kInf, 0.9}};
  CHECK(effective_coverage(open, std::vector<double>{-1e300, 7}) == 1.0);

  const std::vector<PredictionInterval> point{{1, 1, 0.9}, {-3, -3, 0.9}};
  CHECK(effective_coverage(point, std::vector<double>{1, -3}) == 1.0);

  CHECK_THROWS_AS(effective_coverage(pis, std::vector<double>{1, 2}), UsageError);
  CHECK_THROWS_AS(effective_coverage({}, {}), UsageError);
}

TEST_CASE("mean width with unbounded propagation", "[evaluation]") {
  const std::vector<PredictionInterval> two{{0, 2, 0.9}, {1, 3, 0.9}};
  const auto w = mean_width(two);
  CHECK(w.bounded);
  CHECK(w.value == 2.0);

  const std::vector<PredictionInterval> mixed{{0, 2, 0.9}, {-kInf, kInf, 0.9}};
  CHECK_FALSE(mean_width(mixed).bounded);

  const std::vector<PredictionInterval> flat{{4, 4, 0.9}, {-1, -1, 0.9}};
  CHECK(mean_width(flat).value == 0.0);
}

TEST_CASE("coverage is permutation invariant and monotone under widening", "[evaluation][property]") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PredictionInterval> pis(80);
    std::vector<double> ys(80);
    for (std::size_t i = 0; i < pis.size(); ++i) {
      const double c = z(rng);
      const double h = std::abs(z(rng));
      pis[i] = {c - h, c + h, 0.9};
      ys[i] = z(rng);
    }
    const double base = effective_coverage(pis, ys);
    std::vector<std::size_t> order(pis.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<PredictionInterval> p2;
    std::vector<double> y2;
    for (auto i : order) p2.push_back(pis[i]), y2.push_back(ys[i]);
    CHECK(effective_coverage(p2, y2) == base);
    auto wider = pis;
    for (auto& pi : wider) pi.lower -= std::abs(z(rng)), pi.upper += std::abs(z(rng));
    CHECK(effective_coverage(wider, ys) >= base);
  }
}

TEST_CASE("aggregate_runs averages survivors", "[evaluation]") {
  const std::vector<RunResult> rs{run(20.0, 0.90, 0), run(22.0, 0.91, 1)};
  const auto s = aggregate_runs(rs);
  REQUIRE(s.size() == 1);
  REQUIRE(s[0].recorded());
  CHECK(s[0].stats->mean_of_widths == Catch::Approx(21.0));
  CHECK(s[0].stats->mean_coverage == Catch::Approx(0.905));
  CHECK(s[0].stats->std_of_widths == Catch::Approx(1.0));
  CHECK(s[0].n_runs_aggregated == 2);
}

TEST_CASE("no run above the floor means nothing recorded", "[evaluation]") {
  const std::vector<RunResult> rs{run(20.0, 0.85, 0), run(22.0, 0.88, 1)};
  const auto s = aggregate_runs(rs);
  REQUIRE(s.size() == 1);
  CHECK_FALSE(s[0].recorded());
  CHECK(s[0].n_runs_total == 2);
  CHECK(s[0].n_runs_aggregated == 0);
}

TEST_CASE("coverage floor is a strict inequality", "[evaluation]") {
  const std::vector<RunResult> rs{run(20.0, 0.89, 0), run(30.0, 0.8900001, 1)};
  const auto s = aggregate_runs(rs, 0.89);
  REQUIRE(s[0].recorded());
  CHECK(s[0].n_runs_aggregated == 1);
  CHECK(s[0].stats->mean_of_widths == 30.0);
  CHECK(s[0].stats->std_of_widths == 0.0);
}

TEST_CASE("unbounded and infeasible runs are excluded and counted", "[evaluation]") {
  auto unb = run(0.0, 1.0, 1);
  unb.mean_width.reset();
  unb.status = RunStatus::unbounded;
  auto inf = run(0.0, 0.0, 2);
  inf.mean_width.reset();
  inf.coverage.reset();
  inf.status = RunStatus::infeasible;
  const std::vector<RunResult> rs{run(10.0, 0.95, 0), unb, inf};
  const auto s = aggregate_runs(rs);
  REQUIRE(s.size() == 1);
  CHECK(s[0].n_runs_aggregated == 1);
  CHECK(s[0].n_excluded_unbounded == 1);
  CHECK(s[0].n_excluded_infeasible == 1);
  CHECK(s[0].stats->mean_of_widths == 10.0);
}

TEST_CASE("floor zero gives plain mean and population std", "[evaluation][property]") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<RunResult> rs;
  double sum = 0.0, cov = 0.0;
  for (std::uint64_t s = 0; s < 17; ++s) {
    const double w = 5.0 + 10.0 * u(rng);
    const double c = 0.01 + 0.98 * u(rng);
    rs.push_back(run(w, c, s));
    sum += w, cov += c;
  }
  const double mean = sum / 17.0;
  double ss = 0.0;
  for (const auto& r : rs) ss += (*r.mean_width - mean) * (*r.mean_width - mean);
  const auto out = aggregate_runs(rs, 0.0);
  REQUIRE(out.size() == 1);
  CHECK(out[0].stats->mean_of_widths == Catch::Approx(mean).epsilon(1e-12));
  CHECK(out[0].stats->std_of_widths == Catch::Approx(std::sqrt(ss / 17.0)).epsilon(1e-12));
  CHECK(out[0].stats->mean_coverage == Catch::Approx(cov / 17.0).epsilon(1e-12));
}

TEST_CASE("aggregation groups by seedless config in first-appearance order", "[evaluation]") {
  const std::vector<RunResult> rs{run(1.0, 0.95, 0, 20), run(2.0, 0.95, 0, 10), run(3.0, 0.95, 1, 20)};
  const auto s = aggregate_runs(rs);
  REQUIRE(s.size() == 2);
  CHECK(s[0].config.k == 20);
  CHECK(s[0].n_runs_total == 2);
  CHECK(s[1].config.k == 10);
}

TEST_CASE("select_best picks the narrowest recorded summary", "[evaluation]") {
  const auto mk = EstimatorKind::target_strangeness;
  std::vector<EvaluationSummary> in{summary(26.1, 20, 60, mk, Variant::mondrian),
                                    summary(20.4, 40, 20, mk, Variant::mondrian)};
  auto w = select_best(in);
  REQUIRE(w.size() == 1);
  CHECK(w[0].stats->mean_of_widths == 20.4);
  CHECK(w[0].config.k == 40);

  EvaluationSummary blank;
  blank.config.k = 10;
  CHECK(select_best(std::vector<EvaluationSummary>{blank}).empty());
}

TEST_CASE("select_best breaks width ties by smaller k then fewer bins", "[evaluation]") {
  std::vector<EvaluationSummary> in{summary(5.0, 40), summary(5.0, 20)};
  CHECK(select_best(in)[0].config.k == 20);
  std::vector<EvaluationSummary> m{summary(5.0, 20, 30, EstimatorKind::knn_residual, Variant::mondrian),
                                   summary(5.0, 20, 10, EstimatorKind::knn_residual, Variant::mondrian)};
  CHECK(select_best(m)[0].config.bins == 10);
  // Reversed input order gives the same answer.
  std::reverse(in.begin(), in.end());
  CHECK(select_best(in)[0].config.k == 20);
}

TEST_CASE("select_best keeps one winner per estimator and variant", "[evaluation]") {
  std::vector<EvaluationSummary> in{summary(5.0, 10), summary(4.0, 10, 0, EstimatorKind::target_strangeness),
                                    summary(3.0, 10, 10, EstimatorKind::knn_target_std, Variant::mondrian)};
  CHECK(select_best(in).size() == 3);
}

TEST_CASE("config ids encode every key field", "[evaluation]") {
  ConfigKey k;
  k.block = "ext";
  k.estimator = EstimatorKind::knn_residual;
  k.variant = Variant::mondrian;
  k.k = 30;
  k.bins = 20;
  k.confidence = 0.95;
  CHECK(k.id() == "ext|norm_res|mondrian|k=30|bins=20|conf=0.95");
  k.variant = Variant::plain;
  k.bins = 0;
  CHECK(k.id() == "ext|norm_res|plain|k=30|bins=-|conf=0.95");
  RunResult r;
  r.config = k;
  r.seed = 3;
  CHECK(r.config_id() == k.id() + "|seed=3");
  CHECK(parse_run_status(to_string(RunStatus::unbounded)) == RunStatus::unbounded);
  CHECK(parse_variant("mondrian") == Variant::mondrian);
  CHECK_THROWS_AS(parse_variant("venn"), UsageError);
}
