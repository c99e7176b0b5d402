#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ribbo/dataset.hpp"
#include "test_util.hpp"

using namespace ribbo;
using testutil::make_trajectory;
using testutil::random_ys;

namespace {

std::vector<double> rtg_oracle(const std::vector<double>& ys, double y_star) {
  const int T = static_cast<int>(ys.size());
  std::vector<double> r(T + 1, 0.0);
  for (int t = 0; t <= T; ++t) {
    double s = 0.0;
    for (int k = T; k > t; --k) s += y_star - ys[k - 1];
    r[t] = s;
  }
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void dump(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("augment_rtg worked example") {
  Rng rng(1);
  const auto t = make_trajectory({0.2, 0.5, 0.9}, 2, rng);
  const auto aug = augment_rtg(t, 1.0);
  REQUIRE(aug.rtgs.size() == 4);
  CHECK(aug.rtgs[0] == doctest::Approx(1.4).epsilon(1e-15));
  CHECK(aug.rtgs[1] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(aug.rtgs[2] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(aug.rtgs[3] == 0.0);
  CHECK(aug.length() == 3);
  CHECK(aug.xs[0] == padding_x(2));
  CHECK(aug.ys[0] == kPaddingY);
  CHECK(aug.xs[1] == t.xs[0]);

  const auto flat = augment_rtg(make_trajectory({0.7, 0.7}, 1, rng), 0.7);
  for (double r : flat.rtgs) CHECK(r == 0.0);
  CHECK_THROWS_AS(augment_rtg(std::span<const Vec>{}, std::span<const double>{}, 1.0), InvalidInput);
}

TEST_CASE("augment_rtg matches the double-loop oracle") {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const int T = 1 + static_cast<int>(rng() % 60);
    const auto ys = random_ys(T, rng);
    const double y_star = *std::max_element(ys.begin(), ys.end());
    const auto aug = augment_rtg(make_trajectory(ys, 1, rng), y_star);
    const auto want = rtg_oracle(ys, y_star);
    for (int t = 0; t <= T; ++t) CHECK(std::abs(aug.rtgs[t] - want[t]) <= 1e-12);
    CHECK(aug.rtgs[T] == 0.0);
    for (int t = 1; t <= T; ++t) {
      CHECK(std::abs((aug.rtgs[t - 1] - aug.rtgs[t]) - (y_star - ys[t - 1])) <= 1e-12);
      CHECK(aug.rtgs[t] <= aug.rtgs[t - 1]);
    }
  }
}

TEST_CASE("normalize_x") {
  const SearchSpace s = SearchSpace::cube(3, -5, 5);
  CHECK(normalize_x(Vec::Zero(3), s) == Vec::Constant(3, 0.5));
  CHECK(normalize_x(s.lower(), s) == Vec::Zero(3));
  CHECK_THROWS_AS(normalize_x(Vec::Constant(3, 6.0), s), InvalidInput);
  Vec lo(2), hi(2);
  lo << -1, 10;
  hi << 3, 11;
  const SearchSpace box(lo, hi);
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const Vec x = box.sample_uniform(rng);
    CHECK((denormalize_x(normalize_x(x, box), box) - x).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("y scaling") {
  // l = -2, u = 9 maps 4 to 6/11.
  const std::vector<double> ys{4.0};
  const auto sv = scale_y(ys, 10.0, -2.0, 9.0);
  CHECK(sv.ys[0] == doctest::Approx(6.0 / 11.0).epsilon(1e-15));
  CHECK(sv.y_star == doctest::Approx(12.0 / 11.0).epsilon(1e-15));

  const std::vector<double> ext{3.0, 0.0, 10.0, 5.0};
  const auto mid = scale_y(ext, 10.0, 0.0, 10.0);
  CHECK(*std::min_element(mid.ys.begin(), mid.ys.end()) == 0.0);
  CHECK(*std::max_element(mid.ys.begin(), mid.ys.end()) == 1.0);

  Rng rng(4);
  CHECK_THROWS_AS(random_scale_y(ext, 10.0, 2.0, 2.0, rng), MissingData);
  for (int i = 0; i < 2000; ++i) {
    const auto ys2 = random_ys(20, rng);
    const double lo = *std::min_element(ys2.begin(), ys2.end());
    const double hi = *std::max_element(ys2.begin(), ys2.end());
    const double s = hi - lo;
    const auto r = random_scale_y(ys2, hi, lo, hi, rng);
    CHECK(r.lower >= lo - s / 2);
    CHECK(r.lower <= lo + s / 2);
    CHECK(r.upper >= hi - s / 2);
    CHECK(r.upper <= hi + s / 2);
    CHECK(r.upper - r.lower >= s / 4);
    // Argmax invariance.
    CHECK(std::max_element(r.ys.begin(), r.ys.end()) - r.ys.begin() ==
          std::max_element(ys2.begin(), ys2.end()) - ys2.begin());
    // Scale equivariance of the rtgs.
    const auto raw = augment_rtg(make_trajectory(ys2, 1, rng), hi);
    const auto scaled = augment_rtg(std::span<const Vec>(raw.xs.data() + 1, 20), r.ys, r.y_star);
    for (std::size_t t = 0; t < raw.rtgs.size(); ++t) {
      CHECK(std::abs(scaled.rtgs[t] - raw.rtgs[t] / (r.upper - r.lower)) <= 1e-10);
    }
  }
}

TEST_CASE("subsequence windows") {
  Rng rng(5);
  const auto ys = random_ys(10, rng);
  const auto aug = augment_rtg(make_trajectory(ys, 2, rng), 3.0);
  const auto whole = sample_subsequence(aug, 11, rng);
  CHECK(whole.start == 0);
  CHECK(whole.size() == 11);
  CHECK(whole.is_pad[0] == 1);
  CHECK(whole.has_target[10] == 0);
  for (int i = 0; i < 11; ++i) CHECK(whole.rtgs[i] == aug.rtgs[i]);
  CHECK_THROWS_AS(sample_subsequence(aug, 12, rng), InvalidInput);
  CHECK_THROWS_AS(sample_subsequence(aug, 0, rng), InvalidInput);

  const auto w = extract_window(aug, 4, 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(w.rtgs[i] == aug.rtgs[4 + i]);
    CHECK(w.ys[i] == aug.ys[4 + i]);
    CHECK(w.targets[i] == aug.xs[5 + i]);
    CHECK(w.is_pad[i] == 0);
  }

  // tau = 1: start uniform over the 11 positions, each count within 3 sigma.
  const int n = 100000, cells = 11;
  std::vector<int> counts(cells, 0);
  for (int i = 0; i < n; ++i) ++counts[sample_subsequence(aug, 1, rng).start];
  const double p = 1.0 / cells;
  const double sd = std::sqrt(n * p * (1 - p));
  for (int c : counts) CHECK(std::abs(c - n * p) <= 3 * sd);
}

TEST_CASE("trajectory line round trip and errors") {
  Rng rng(6);
  auto t = make_trajectory({0.1, -2.5e-7, 1.0 / 3.0}, 3, rng, {"bra:nin", 4}, BehaviorId::CmaEs);
  t.xs[1][2] = 1.0;
  const auto line = format_trajectory_line(t);
  CHECK(parse_trajectory_line(line) == t);
  CHECK_THROWS_AS(parse_trajectory_line("a\tb"), FormatError);

  std::string text = "#ribbo-trajectories v1\n" + line + "\n" + line + "\n";
  CHECK(parse_trajectory_text(text, "mem").size() == 2);
  std::string bad = text;
  bad.replace(bad.rfind("0.1"), 3, "0.x");
  try {
    parse_trajectory_text(bad, "mem");
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("mem:3:") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_trajectory_text("#ribbo-trajectories v9\n" + line + "\n", "mem"), FormatError);
}

TEST_CASE("dataset round trip, stats and integrity checks") {
  const Dataset ds = testutil::synthetic_dataset(3, 4, 6, 2, 8);
  for (const auto& st : ds.manifest.tasks) {
    double hi = -1e300, lo = 1e300;
    for (const auto& t : ds.trajectories) {
      if (!(t.task == st.ref)) continue;
      for (double y : t.ys) {
        hi = std::max(hi, y);
        lo = std::min(lo, y);
      }
    }
    CHECK(st.y_max == hi);
    CHECK(st.y_min == lo);
    CHECK(st.optimum_proxy == hi);
  }
  const auto dir = testutil::scratch_dir("dataset_rt");
  write_dataset(ds, dir);
  const Dataset back = read_dataset(dir);
  REQUIRE(back.trajectories.size() == ds.trajectories.size());
  for (const auto& t : ds.trajectories) {
    CHECK(std::find(back.trajectories.begin(), back.trajectories.end(), t) != back.trajectories.end());
  }
  CHECK(back.manifest.tasks.size() == ds.manifest.tasks.size());
  CHECK(back.manifest.base_seed == ds.manifest.base_seed);
  CHECK(back.manifest.distributions.front().space == ds.manifest.distributions.front().space);
  for (std::size_t i = 0; i < ds.manifest.tasks.size(); ++i) {
    CHECK(back.manifest.tasks[i].y_max == ds.manifest.tasks[i].y_max);
    CHECK(back.manifest.tasks[i].optimum_proxy == ds.manifest.tasks[i].optimum_proxy);
  }

  const auto file = dir / back.manifest.files.front().path;
  const std::string body = slurp(file);
  std::string edited = body;
  edited[edited.size() - 3] = edited[edited.size() - 3] == '1' ? '2' : '1';
  dump(file, edited);
  CHECK_THROWS_AS(read_dataset(dir), FormatError);
  dump(file, body);

  const auto mpath = dir / "manifest.json";
  const std::string manifest = slurp(mpath);
  std::string v2 = manifest;
  v2.replace(v2.find("\"version\": 1"), 12, "\"version\": 2");
  dump(mpath, v2);
  CHECK_THROWS_AS(read_dataset(dir), FormatError);
  dump(mpath, manifest);
  CHECK_NOTHROW(read_dataset(dir));
}

TEST_CASE("telescoping on a generated-style dataset") {
  const Dataset ds = testutil::synthetic_dataset(4, 6, 30, 3, 9);
  for (const auto& t : ds.trajectories) {
    const double y_star = ds.stats(t.task).optimum_proxy;
    const auto aug = augment_rtg(t, y_star);
    for (int i = 1; i <= t.length(); ++i) {
      CHECK(std::abs((aug.rtgs[i - 1] - aug.rtgs[i]) - (y_star - t.ys[i - 1])) <= 1e-12);
    }
  }
}

}  // TEST_SUITE
