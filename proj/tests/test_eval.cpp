#include <algorithm>
#include <numeric>
#include <random>

#include <doctest.h>
#include <json.hpp>

#include "pla/common.hpp"
#include "pla/eval.hpp"

using namespace pla;

namespace {

// gt/pred pairs producing rows a: [3,1,0,0], b: [0,2,2,0], c: [1,0,1,0], d: nothing
void fill_example(std::vector<int>& pred, std::vector<int>& gt) {
  const int rows[3][3] = {{3, 1, 0}, {0, 2, 2}, {1, 0, 1}};
  for (int g = 0; g < 3; ++g)
    for (int p = 0; p < 3; ++p)
      for (int n = 0; n < rows[g][p]; ++n) {
        gt.push_back(g);
        pred.push_back(p);
      }
}

const CategoryList kCats{{"a", "b", "c", "d"}, {true, true, false, false}};

}  // namespace

TEST_CASE("accumulate: diagonal, ignored, naive count") {
  ConfusionMatrix cm(3);
  cm.accumulate({0, 1, 2, 2}, {0, 1, 2, 2});
  CHECK(cm.counts()(2, 2) == 2);
  CHECK(cm.total() == 4);
  CHECK(cm.counts().sum() == cm.counts().diagonal().sum());

  const ConfusionMatrix same = accumulate(cm, {0, 1, 2}, {kIgnored, kIgnored, kIgnored});
  CHECK(same.counts() == cm.counts());

  CHECK_THROWS_AS(cm.accumulate({3}, {0}), InputError);
  CHECK_THROWS_AS(cm.accumulate({0}, {5}), InputError);
  CHECK_THROWS_AS(cm.accumulate({0, 1}, {0}), InputError);

  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> u(-1, 4);
  std::vector<int> p, g;
  for (int i = 0; i < 100; ++i) {
    p.push_back(std::max(0, u(rng)));
    g.push_back(u(rng));
  }
  ConfusionMatrix big(5);
  big.accumulate(p, g);
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b) {
      std::int64_t n = 0;
      for (int i = 0; i < 100; ++i) n += g[i] == a && p[i] == b;
      CHECK(big.counts()(a, b) == n);
    }
}

TEST_CASE("accumulate: batch order does not matter") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> u(0, 3);
  std::vector<std::vector<int>> ps(4), gs(4);
  for (int b = 0; b < 4; ++b)
    for (int i = 0; i < 30; ++i) {
      ps[b].push_back(u(rng));
      gs[b].push_back(u(rng));
    }
  ConfusionMatrix fwd(4), rev(4), merged(4);
  for (int b = 0; b < 4; ++b) fwd.accumulate(ps[b], gs[b]);
  for (int b = 3; b >= 0; --b) rev.accumulate(ps[b], gs[b]);
  ConfusionMatrix left(4), right(4);
  left.accumulate(ps[0], gs[0]);
  left.accumulate(ps[1], gs[1]);
  right.accumulate(ps[2], gs[2]);
  right.accumulate(ps[3], gs[3]);
  merged.merge(left);
  merged.merge(right);
  CHECK(fwd.counts() == rev.counts());
  CHECK(fwd.counts() == merged.counts());
}

TEST_CASE("report: hand-computed example") {
  std::vector<int> p, g;
  fill_example(p, g);
  ConfusionMatrix cm(4);
  cm.accumulate(p, g);
  const auto r = report(cm, kCats);
  REQUIRE(r.per_class_iou[0]);
  CHECK(*r.per_class_iou[0] == doctest::Approx(0.6));
  CHECK(*r.per_class_iou[1] == doctest::Approx(0.4));
  CHECK(*r.per_class_iou[2] == doctest::Approx(0.25));
  CHECK_FALSE(r.per_class_iou[3]);  // absent everywhere, excluded
  CHECK(*r.miou_base == doctest::Approx(0.5));
  CHECK(*r.miou_novel == doctest::Approx(0.25));
  CHECK(*r.miou_all == doctest::Approx(1.25 / 3));
  CHECK(*r.hiou == doctest::Approx(1.0 / 3));
}

TEST_CASE("report: invariant under a simultaneous permutation") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> u(0, 3);
  std::vector<int> p, g;
  for (int i = 0; i < 200; ++i) {
    p.push_back(u(rng));
    g.push_back(u(rng));
  }
  ConfusionMatrix cm(4);
  cm.accumulate(p, g);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  CategoryList pc;
  for (const auto k : perm) {
    pc.names.push_back(kCats.names[k]);
    pc.base_mask.push_back(kCats.base_mask[k]);
  }
  const auto a = report(cm, kCats);
  const auto b = report(cm.permuted(perm), pc);
  CHECK(*a.miou_base == doctest::Approx(*b.miou_base).epsilon(1e-15));
  CHECK(*a.miou_novel == doctest::Approx(*b.miou_novel).epsilon(1e-15));
  CHECK(*a.hiou == doctest::Approx(*b.hiou).epsilon(1e-15));
  for (std::size_t i = 0; i < perm.size(); ++i) CHECK(b.per_class_iou[i] == a.per_class_iou[perm[i]]);
}

TEST_CASE("harmonic mean: identities and published pairs") {
  CHECK(harmonic_mean_iou(0.42, 0.42) == doctest::Approx(0.42));
  CHECK(harmonic_mean_iou(0, 0) == 0.0);
  CHECK(harmonic_mean_iou(0, 55.0) == 0.0);
  CHECK(std::abs(harmonic_mean_iou(68.3, 62.4) - 65.2) <= 0.1);
  CHECK(std::abs(harmonic_mean_iou(58.0, 7.4) - 13.1) <= 0.1);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 200; ++i) {
    const double b = u(rng), n = u(rng), h = harmonic_mean_iou(b, n);
    CHECK(h <= 2 * std::min(b, n) + 1e-15);
    CHECK(h <= std::max(b, n) + 1e-15);
    CHECK(h >= std::min(b, n) - 1e-15);
  }
}

TEST_CASE("report: needs base and novel classes") {
  ConfusionMatrix cm(2);
  cm.accumulate({0, 1}, {0, 1});
  const auto r = report(cm, {{"a", "b"}, {true, true}});
  CHECK_FALSE(r.miou_novel);
  CHECK_FALSE(r.hiou);
  CHECK(*r.miou_all == 1.0);
  CHECK_THROWS_AS(report(cm, {{"a", "b", "c"}, {true, true, false}}), InputError);
}

TEST_CASE("report output formats") {
  std::vector<int> p, g;
  fill_example(p, g);
  ConfusionMatrix cm(4);
  cm.accumulate(p, g);
  const auto r = report(cm, kCats);
  const auto j = nlohmann::json::parse(report_to_json(r));
  CHECK(j["hiou"].get<double>() == doctest::Approx(1.0 / 3));
  CHECK(j["classes"].size() == 4);
  CHECK(j["classes"][3]["iou"].is_null());
  CHECK(j["classes"][2]["split"] == "novel");
  const std::string text = report_to_text(r);
  CHECK(text.find("hIoU") != std::string::npos);
  CHECK(text.find("33.3") != std::string::npos);
}
