#include "oracles.hpp"

#include "touchmap/contact_detector.hpp"
#include "touchmap/error.hpp"
#include "touchmap/evaluation.hpp"

#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <algorithm>

using namespace touchmap;

namespace {

TrackRecord person(int id, const Vec2& xy) {
  TrackRecord r;
  r.id = id;
  for (int k = 0; k < kJointCount; ++k) {
    r.joints[k] = Vec3(xy.x(), xy.y(), 0.05 * k);
    r.available[k] = true;
  }
  return r;
}

EpisodeRecord episode(std::optional<int> p, Side s, int label, int a, int b) {
  return {p, s, label, a, b, Vec3::Zero(), 0.0};
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "touchmap_eval_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("IDF1 equals the best partial bijection") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<FrameCorrespondence> corr;
      const int frames = 1 + trial % 20;
      for (int f = 0; f < frames; ++f) {
        FrameCorrespondence c;
        c.frame = f;
        for (int g = 1; g <= 4; ++g)
          if (rng() % 4) c.gt_ids.push_back(g);
        for (int p = 10; p < 14; ++p)
          if (rng() % 4) c.pred_ids.push_back(p);
        for (int g : c.gt_ids)
          for (int p : c.pred_ids)
            if (rng() % 3 == 0) c.gated.emplace_back(g, p);
        corr.push_back(c);
      }
      const auto m = mot_metrics(corr);
      const auto ref = oracle::brute_force_idf1(corr);
      REQUIRE(m.idtp == ref.idtp);
      CHECK(m.idfp == ref.idfp);
      CHECK(m.idfn == ref.idfn);
      CHECK(m.idf1 == doctest::Approx(ref.idf1).epsilon(1e-12));
    }
    CHECK(mot_metrics({}).idf1 == 1.0);
  }

  TEST_CASE("switches and fragments") {
    std::vector<FrameCorrespondence> corr;
    const std::vector<int> seq{5, 5, 6, 6, 5, -1, 5};
    for (int f = 0; f < static_cast<int>(seq.size()); ++f) {
      FrameCorrespondence c;
      c.frame = f;
      c.gt_ids = {1};
      if (seq[f] > 0) {
        c.pred_ids = {seq[f]};
        c.matches = {{1, seq[f]}};
        c.gated = {{1, seq[f]}};
      }
      corr.push_back(c);
    }
    const auto m = mot_metrics(corr);
    CHECK(m.id_switches == 2);
    CHECK(m.fragments == 2);
    CHECK(m.id_map.at(1) == 5);
    CHECK(m.idtp == 4);
    CHECK(m.idfn == 3);
    CHECK(m.idfp == 2);
  }

  TEST_CASE("frame matching uses torso floor centres and the radius") {
    const auto schema = JointSchema::halpe26();
    TrackStream gt, pred;
    gt[0] = {person(1, Vec2(0, 0)), person(2, Vec2(2, 0))};
    pred[0] = {person(7, Vec2(1.9, 0.1)), person(8, Vec2(0.2, 0)), person(9, Vec2(-2, -2))};
    auto headless = person(10, Vec2(0, 0));
    for (int k : schema.torso) headless.available[k] = false;
    pred[1] = {headless};
    const auto corr = match_tracks(pred, gt, 0.5, schema);
    REQUIRE(corr.size() == 2);
    CHECK(corr[0].matches == std::vector<std::pair<int, int>>{{1, 8}, {2, 7}});
    CHECK(corr[0].gated.size() == 2);
    CHECK(corr[0].pred_ids.size() == 3);
    CHECK(corr[1].pred_ids.empty());
    CHECK_FALSE(floor_center(headless, schema));

    long n = 0;
    const double e = mean_joint_error(pred, gt, corr, &n);
    CHECK(n == 2 * kJointCount);
    CHECK(e == doctest::Approx((0.2 + std::sqrt(0.02)) / 2));
  }

  TEST_CASE("framewise positives honour the id map and the hidden mask") {
    const std::vector<EpisodeRecord> pred{episode(7, Side::Right, 2, 0, 3), episode(std::nullopt, Side::Left, 2, 0, 0)};
    FrameIdMap ids;
    ids[0][7] = 1;
    ids[1][7] = 1;
    ids[2][7] = 2;
    VisibilityMask hidden;
    hidden[1].insert({1, Side::Right});
    const auto s = framewise_positives(pred, true, &ids, hidden);
    CHECK(s.count({1, 1, 2, 0}));
    CHECK_FALSE(s.count({1, 1, 2, 1}));  // hidden
    CHECK(s.count({2, 1, 2, 2}));
    CHECK(s.count({-2 - 7, 1, 2, 3}));  // no mapping that frame: kept, cannot match
    CHECK(s.count({-1, 0, 2, 0}));
    CHECK(s.size() == 4);
    const auto bin = framewise_positives(pred, false, &ids, hidden);
    CHECK(bin.count({1, 1, -1, 0}));
  }

  TEST_CASE("contact metrics by hand") {
    FrameIdMap ids;
    for (int f = 0; f < 40; ++f) ids[f] = {{7, 1}, {8, 2}};
    const std::vector<EpisodeRecord> gt{episode(1, Side::Right, 3, 10, 19), episode(2, Side::Left, 4, 20, 29)};

    auto m = contact_metrics({episode(7, Side::Right, 3, 10, 19), episode(8, Side::Left, 4, 20, 29)}, gt, ids, {});
    CHECK(m.valid);
    CHECK(m.episode_recall == 1.0);
    CHECK(m.binary_f1 == 1.0);
    CHECK(m.semantic_f1 == 1.0);
    CHECK(m.identity_accuracy == 1.0);

    // Late by 5 frames, wrong label on the second, wrong person on the first.
    m = contact_metrics({episode(8, Side::Right, 3, 15, 24), episode(8, Side::Left, 5, 20, 29)}, gt, ids, {});
    CHECK(m.episode_recall == 0.5);
    // binary: pred (2,R,15..24) none right; (2,L,20..29) all right -> tp 10, fp 10, fn 10
    CHECK(m.binary_f1 == doctest::Approx(0.5));
    CHECK(m.binary_iou == doctest::Approx(1.0 / 3));
    CHECK(m.semantic_f1 == 0.0);
    CHECK(m.matched_pred_episodes == 1);
    CHECK(m.identity_accuracy == 0.0);

    CHECK_FALSE(contact_metrics({episode(7, Side::Right, 3, 0, 5)}, {}, ids, {}).valid);
  }

  TEST_CASE("threshold grid") {
    const auto g = parse_grid("0.02:0.40:0.02");
    REQUIRE(g.size() == 20);
    CHECK(g.front() == 0.02);
    CHECK(g.back() == doctest::Approx(0.40));
    CHECK(parse_grid("0.1") == std::vector<double>{0.1});
    CHECK_THROWS_AS(parse_grid("a:b:c"), Error);
    CHECK_THROWS_AS(parse_grid("0.4:0.1:0.1"), Error);
    CHECK_THROWS_AS(parse_grid("0.1:0.4:0"), Error);
  }

  TEST_CASE("sweep reproduces single-threshold detection") {
    std::vector<ContactSample> samples;
    for (int f = 0; f < 30; ++f) {
      const double d = f < 10 || f >= 20 ? 0.3 : 0.05 + 0.01 * (f % 3);
      samples.push_back({f, 1, Side::Right, 7, 3, d, Vec3::Zero()});
    }
    FrameIdMap ids;
    for (int f = 0; f < 30; ++f) ids[f] = {{7, 1}};
    const std::vector<EpisodeRecord> gt{episode(1, Side::Right, 3, 10, 19)};
    const auto rows = threshold_sweep(samples, ContactConfig{}, {0.02, 0.12, 0.5}, gt, ids, {});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].f1 == 0.0);
    CHECK(rows[1].f1 == 1.0);
    CHECK(rows[2].f1 < 1.0);
  }

  TEST_CASE("files round trip") {
    const std::vector<EpisodeRecord> eps{{3, Side::Left, 2, 5, 9, Vec3(0.1, -0.25, 1.125), 0.0125},
                                         {std::nullopt, Side::Right, 1, 7, 7, Vec3::Zero(), 0}};
    write_episodes_csv(scratch("e.csv"), eps);
    const auto back = read_episodes(scratch("e.csv"));
    REQUIRE(back.size() == 2);
    CHECK(back[0].person_id == 3);
    CHECK(back[0].side == Side::Left);
    CHECK((back[0].point - eps[0].point).norm() < 1e-4);
    CHECK_FALSE(back[1].person_id);

    {
      std::ofstream os(scratch("t.jsonl"));
      write_track_line(os, 4, person(2, Vec2(0.5, 0.25)), true);
    }
    const auto ts = read_tracks(scratch("t.jsonl"));
    REQUIRE(ts.at(4).size() == 1);
    CHECK(ts.at(4)[0].id == 2);
    CHECK((ts.at(4)[0].joints[3] - Vec3(0.5, 0.25, 0.15)).norm() < 1e-5);

    {
      std::ofstream os(scratch("bad.csv"));
      os << "header\n1,left,2,9,5,0,0,0,0\n";
    }
    CHECK_THROWS_AS(read_episodes(scratch("bad.csv")), Error);
    CHECK_THROWS_AS(read_tracks(scratch("missing.jsonl")), Error);
    CHECK(read_visibility(scratch("missing.jsonl")).empty());
  }

  TEST_CASE("contact rates are bounded and ignore how ids are numbered") {
    std::mt19937_64 rng(71);
    auto random_episodes = [&](const std::vector<int>& people, int n) {
      std::vector<EpisodeRecord> out;
      for (int i = 0; i < n; ++i) {
        const int a = static_cast<int>(rng() % 60), len = 1 + static_cast<int>(rng() % 15);
        std::optional<int> p;
        if (rng() % 8) p = people[rng() % people.size()];
        out.push_back(episode(p, rng() % 2 ? Side::Left : Side::Right, 1 + static_cast<int>(rng() % 3), a, a + len));
      }
      return out;
    };
    for (int trial = 0; trial < 300; ++trial) {
      const auto gt = random_episodes({1, 2, 3}, 1 + trial % 5);
      const auto pred = random_episodes({7, 8, 9}, trial % 6);
      FrameIdMap ids;
      for (int f = 0; f < 80; ++f)
        for (int p : {7, 8, 9})
          if (rng() % 5) ids[f][p] = 1 + static_cast<int>(rng() % 3);
      VisibilityMask hidden;
      for (int i = 0; i < 10; ++i) hidden[static_cast<int>(rng() % 80)].insert({1, Side::Right});

      const auto m = contact_metrics(pred, gt, ids, hidden);
      for (double r : {m.episode_recall, m.binary_f1, m.binary_iou, m.semantic_f1, m.semantic_iou, m.identity_accuracy}) {
        REQUIRE(r >= 0);
        REQUIRE(r <= 1);
      }
      REQUIRE(m.binary_iou <= m.binary_f1 + 1e-12);

      // Shift predicted ids by 100 and rotate gt ids 1->2->3->1.
      auto rot = [](int g) { return g % 3 + 1; };
      auto pred2 = pred;
      for (auto& e : pred2)
        if (e.person_id) *e.person_id += 100;
      auto gt2 = gt;
      for (auto& e : gt2)
        if (e.person_id) e.person_id = rot(*e.person_id);
      FrameIdMap ids2;
      for (const auto& [f, m1] : ids)
        for (const auto& [p, g] : m1) ids2[f][p + 100] = rot(g);
      VisibilityMask hidden2;
      for (const auto& [f, set] : hidden)
        for (const auto& [g, side] : set) hidden2[f].insert({rot(g), side});
      const auto m2 = contact_metrics(pred2, gt2, ids2, hidden2);
      CHECK(m2.episode_recall == m.episode_recall);
      CHECK(m2.binary_f1 == m.binary_f1);
      CHECK(m2.semantic_iou == m.semantic_iou);
      CHECK(m2.identity_accuracy == m.identity_accuracy);
      CHECK(m2.matched_pred_episodes == m.matched_pred_episodes);
    }
  }

  TEST_CASE("identity metrics ignore how ids are numbered") {
    std::mt19937_64 rng(73);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<FrameCorrespondence> corr, relabeled;
      for (int f = 0; f < 15; ++f) {
        FrameCorrespondence c;
        c.frame = f;
        for (int g = 1; g <= 3; ++g)
          if (rng() % 4) c.gt_ids.push_back(g);
        for (int p = 10; p < 13; ++p)
          if (rng() % 4) c.pred_ids.push_back(p);
        std::set<int> used;
        for (int g : c.gt_ids)
          for (int p : c.pred_ids)
            if (rng() % 3 == 0) {
              c.gated.emplace_back(g, p);
              if (!used.count(p) && (c.matches.empty() || c.matches.back().first != g)) {
                c.matches.emplace_back(g, p);
                used.insert(p);
              }
            }
        corr.push_back(c);
        auto r = c;
        for (auto& p : r.pred_ids) p = 50 - p;
        for (auto& [g, p] : r.gated) p = 50 - p;
        for (auto& [g, p] : r.matches) p = 50 - p;
        relabeled.push_back(r);
      }
      const auto a = mot_metrics(corr), b = mot_metrics(relabeled);
      REQUIRE(a.idf1 >= 0);
      REQUIRE(a.idf1 <= 1);
      CHECK(a.idtp == b.idtp);
      CHECK(a.idfp == b.idfp);
      CHECK(a.idfn == b.idfn);
      CHECK(a.id_switches == b.id_switches);
      CHECK(a.fragments == b.fragments);
    }
  }

  TEST_CASE("binary positives grow with tau_on when hysteresis is off") {
    std::mt19937_64 rng(79);
    std::uniform_real_distribution<double> U(0.0, 0.3);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<ContactSample> samples;
      for (int f = 0; f < 60; ++f)
        for (int hand = 1; hand <= 2; ++hand)
          samples.push_back({f, hand, hand == 1 ? Side::Left : Side::Right, 7, 1 + hand, U(rng), Vec3::Zero()});
      std::set<FrameKey> prev;
      for (double tau = 0.02; tau <= 0.3; tau += 0.02) {
        ContactConfig cfg;
        cfg.tau_on = cfg.tau_off = tau;
        cfg.max_gap_frames = 0;
        cfg.min_episode_frames = 1;
        std::vector<EpisodeRecord> eps;
        for (const auto& e : detect_episodes(samples, cfg))
          eps.push_back({e.person_id, e.side, e.surface_label, e.t_start, e.t_stop, e.contact_point, e.min_distance});
        const auto now = framewise_positives(eps, false, nullptr, {});
        REQUIRE(std::includes(now.begin(), now.end(), prev.begin(), prev.end()));
        prev = now;
      }
    }
  }
}
