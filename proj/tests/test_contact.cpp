#include "oracles.hpp"

#include "touchmap/contact_detector.hpp"
#include "touchmap/error.hpp"

#include "doctest.h"

#include <algorithm>
#include <map>
#include <random>

using namespace touchmap;

namespace {

std::vector<ContactSample> trace(const std::vector<double>& d, int first_frame = 0, std::optional<int> person = 1) {
  std::vector<ContactSample> out;
  for (std::size_t i = 0; i < d.size(); ++i)
    out.push_back({first_frame + static_cast<int>(i), 1, Side::Right, person, 3, d[i], Vec3(0, 0, d[i])});
  return out;
}

Anchors uniform(const Vec3& p) {
  Anchors a;
  a.fill(p);
  return a;
}

}  // namespace

TEST_SUITE("contact") {
  TEST_CASE("config checks") {
    ContactConfig c;
    CHECK_NOTHROW(c.validate());
    c.tau_off = c.tau_on;
    CHECK_NOTHROW(c.validate());
    c.tau_off = c.tau_on - 0.01;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.ema_alpha = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.min_episode_frames = 0;
    CHECK_THROWS_AS(c.validate(), Error);
  }

  TEST_CASE("hysteresis agrees with the direct state machine") {
    ContactConfig cfg;
    std::mt19937_64 rng(5);
    const std::array<double, 6> specials{cfg.tau_on, cfg.tau_off, std::nextafter(cfg.tau_on, 0.0),
                                         std::nextafter(cfg.tau_off, 1.0), 0.0, 1.0};
    std::uniform_real_distribution<double> U(0.05, 0.22);
    std::uniform_int_distribution<int> pick(0, 9);
    for (int seq = 0; seq < 100000; ++seq) {
      std::vector<double> d(1 + seq % 24);
      for (auto& x : d) {
        const int k = pick(rng);
        x = k < 6 ? specials[k] : U(rng);
      }
      const auto expected = oracle::hysteresis_trace(d, cfg.tau_on, cfg.tau_off);
      bool active = false;
      for (std::size_t i = 0; i < d.size(); ++i) {
        active = hysteresis_step(active, d[i], cfg);
        REQUIRE(active == static_cast<bool>(expected[i]));
      }
    }
    // Exactly at the thresholds nothing changes.
    CHECK_FALSE(hysteresis_step(false, cfg.tau_on, cfg));
    CHECK(hysteresis_step(true, cfg.tau_off, cfg));
  }

  TEST_CASE("anchor smoothing") {
    const Anchors a = uniform(Vec3(1, 0, 0)), b = uniform(Vec3(0, 1, 0));
    CHECK(smooth_anchors(std::nullopt, a, 0.3)[0] == a[0]);
    CHECK(smooth_anchors(a, b, 1.0)[4] == b[4]);
    CHECK((smooth_anchors(a, b, 0.25)[2] - Vec3(0.75, 0.25, 0)).norm() < 1e-15);
    CHECK(smooth_anchors(a, a, 0.4)[0] == a[0]);

    ContactConfig cfg;
    cfg.ema_alpha = 0.5;
    AnchorSmoother s(cfg);
    CHECK(s.update(1, 0, a)[0] == a[0]);
    CHECK((s.update(1, 1, b)[0] - Vec3(0.5, 0.5, 0)).norm() < 1e-15);
    CHECK(s.update(2, 1, b)[0] == b[0]);
    // A gap longer than max_gap_frames restarts the filter.
    CHECK(s.update(1, 1 + cfg.max_gap_frames + 2, a)[0] == a[0]);
  }

  TEST_CASE("label distances take the minimum over anchors per label") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> U(-1, 1);
    std::vector<Vec3> pts;
    std::vector<int> labels;
    for (int i = 0; i < 500; ++i) {
      pts.emplace_back(U(rng), U(rng), U(rng));
      labels.push_back(1 + i % 3);
    }
    const SemanticCloud cloud(0, 0.01, pts, labels);
    for (int t = 0; t < 50; ++t) {
      Anchors a;
      for (auto& p : a) p = Vec3(U(rng), U(rng), U(rng));
      const auto got = label_distances(a, cloud);
      REQUIRE(got.size() == 3);
      for (const auto& [label, ld] : got) {
        double best = 1e9;
        for (const auto& q : a)
          for (std::size_t i = 0; i < pts.size(); ++i)
            if (labels[i] == label) best = std::min(best, (pts[i] - q).norm());
        CHECK(ld.distance == doctest::Approx(best).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("interval merging") {
    ContactConfig cfg;
    cfg.max_gap_frames = 2;
    cfg.min_episode_frames = 3;
    CHECK(merge_intervals({}, cfg).empty());
    CHECK(merge_intervals({1, 2, 3, 6, 7}, cfg) == std::vector<std::pair<int, int>>{{1, 7}});
    CHECK(merge_intervals({1, 2, 3, 7, 8}, cfg) == std::vector<std::pair<int, int>>{{1, 3}});
    CHECK(merge_intervals({1, 2, 10, 11, 12}, cfg) == std::vector<std::pair<int, int>>{{10, 12}});
  }

  TEST_CASE("episodes from a distance trace") {
    ContactConfig cfg;
    const std::vector<double> d{0.3, 0.2, 0.11, 0.05, 0.02, 0.14, 0.16, 0.13, 0.10, 0.3, 0.3};
    const auto eps = detect_episodes(trace(d, 100), cfg);
    REQUIRE(eps.size() == 1);
    // Active at frames 102..105 and 108; the gap of two frames is bridged.
    CHECK(eps[0].t_start == 102);
    CHECK(eps[0].t_stop == 108);
    CHECK(eps[0].min_distance == 0.02);
    CHECK(eps[0].contact_point.z() == 0.02);
    CHECK(eps[0].person_id == 1);
    CHECK(eps[0].surface_label == 3);

    cfg.max_gap_frames = 1;
    const auto split = detect_episodes(trace(d, 100), cfg);
    REQUIRE(split.size() == 1);
    CHECK(split[0].t_stop == 105);

    CHECK(detect_episodes(trace({0.01, 0.01}), ContactConfig{}).empty());
    CHECK(detect_episodes({}, ContactConfig{}).empty());
  }

  TEST_CASE("episode person is the most frequent one") {
    auto s = trace({0.01, 0.01, 0.01, 0.01, 0.01});
    s[0].person_id = 4;
    s[1].person_id.reset();
    s[2].person_id.reset();
    s[3].person_id = 4;
    s[4].person_id = 2;
    auto eps = detect_episodes(s, ContactConfig{});
    REQUIRE(eps.size() == 1);
    CHECK(eps[0].person_id == 4);
    s[3].person_id.reset();
    eps = detect_episodes(s, ContactConfig{});
    CHECK_FALSE(eps[0].person_id);
  }

  TEST_CASE("a hand that vanishes resets its state machine") {
    ContactConfig cfg;
    cfg.min_episode_frames = 1;
    auto s = trace({0.01, 0.01});
    // Back after 5 missing frames in the hold band: not active any more.
    s.push_back({7, 1, Side::Right, 1, 3, 0.13, Vec3::Zero()});
    const auto eps = detect_episodes(s, cfg);
    REQUIRE(eps.size() == 1);
    CHECK(eps[0].t_stop == 1);
  }

  TEST_CASE("streaming episodes equal hysteresis then merging") {
    std::mt19937_64 rng(33);
    std::uniform_real_distribution<double> U(0.0, 0.3);
    ContactConfig cfg;
    for (int t = 0; t < 500; ++t) {
      std::vector<double> d(60);
      double x = U(rng);
      for (auto& v : d) v = x = std::clamp(x + 0.08 * (U(rng) - 0.15), 0.0, 0.3);
      const auto active = oracle::hysteresis_trace(d, cfg.tau_on, cfg.tau_off);
      std::vector<int> frames;
      for (int i = 0; i < 60; ++i)
        if (active[i]) frames.push_back(i);
      const auto want = merge_intervals(frames, cfg);
      const auto got = detect_episodes(trace(d), cfg);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].t_start == want[i].first);
        CHECK(got[i].t_stop == want[i].second);
        CHECK(got[i].t_stop - got[i].t_start + 1 >= cfg.min_episode_frames);
      }
    }
  }

  TEST_CASE("raising tau_off never shortens episodes") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> U(0.0, 0.3);
    for (int t = 0; t < 500; ++t) {
      std::vector<double> d(80);
      double x = U(rng);
      for (auto& v : d) v = x = std::clamp(x + 0.1 * (U(rng) - 0.15), 0.0, 0.3);
      ContactConfig lo, hi;
      hi.tau_off = lo.tau_off + 0.01 + 0.1 * U(rng);
      const auto narrow = detect_episodes(trace(d), lo), wide = detect_episodes(trace(d), hi);
      for (const auto& e : narrow) {
        const bool covered = std::any_of(wide.begin(), wide.end(), [&](const auto& w) {
          return w.t_start <= e.t_start && e.t_stop <= w.t_stop;
        });
        REQUIRE(covered);
      }
    }
  }

  TEST_CASE("equal thresholds behave as a single threshold") {
    ContactConfig cfg;
    cfg.tau_off = cfg.tau_on;
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> U(0.0, 0.3);
    for (int t = 0; t < 10000; ++t) {
      bool active = t % 2;
      for (int i = 0; i < 20; ++i) {
        double d = U(rng);
        if (d == cfg.tau_on) continue;
        active = hysteresis_step(active, d, cfg);
        REQUIRE(active == (d < cfg.tau_on));
      }
    }
  }

  TEST_CASE("episodes of one hand and label are sorted and separated") {
    std::mt19937_64 rng(47);
    std::uniform_real_distribution<double> U(0.0, 0.3);
    ContactConfig cfg;
    for (int t = 0; t < 300; ++t) {
      std::vector<ContactSample> s;
      for (int f = 0; f < 120; ++f)
        for (int hand = 1; hand <= 2; ++hand)
          for (int label = 1; label <= 2; ++label) {
            if (rng() % 10 == 0) continue;
            const double d = U(rng) < 0.5 ? 0.02 : 0.25;
            s.push_back({f, hand, hand == 1 ? Side::Left : Side::Right, hand, label, d, Vec3::Zero()});
          }
      const auto eps = detect_episodes(s, cfg);
      std::map<std::pair<int, int>, int> last_stop;
      for (const auto& e : eps) {
        REQUIRE(e.t_start <= e.t_stop);
        REQUIRE(e.t_stop - e.t_start + 1 >= cfg.min_episode_frames);
        const auto key = std::make_pair(e.hand_track_id, e.surface_label);
        const auto it = last_stop.find(key);
        if (it != last_stop.end()) REQUIRE(e.t_start > it->second + cfg.max_gap_frames + 1);
        last_stop[key] = e.t_stop;
      }
    }
  }
}
