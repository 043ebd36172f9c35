// One pass/fail line per acceptance criterion. Run with --criterion NAME or
// --all; the exit status is non-zero when any selected criterion fails.

#include "fixtures.hpp"
#include "mock_http.hpp"
#include "oracles.hpp"

#include "forge/benchmark_build.hpp"
#include "forge/compositor.hpp"
#include "forge/eval_harness.hpp"
#include "forge/geometry.hpp"
#include "forge/inpaint.hpp"
#include "forge/jsonl.hpp"
#include "forge/labeling.hpp"
#include "forge/pipeline.hpp"
#include "forge/png_io.hpp"
#include "forge/rng.hpp"
#include "forge/statistics.hpp"
#include "forge/synth.hpp"
#include "forge/triplet_select.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

using namespace forge;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path forge_bin;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char *f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool same_pixel(const RgbImage &a, const RgbImage &b, int x, int y) {
  return a.at(x, y, 0) == b.at(x, y, 0) && a.at(x, y, 1) == b.at(x, y, 1) && a.at(x, y, 2) == b.at(x, y, 2);
}

int run_command(const std::string &cmd) {
  const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
  return rc;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------- geometry

Outcome geometry(const Context &) {
  const auto t0 = Clock::now();
  Rng rng(101);

  // Reprojection against the closed-form world hit projected into the other camera.
  double worst_px = 0.0;
  long long points = 0;
  for (int s = 0; s < 6; ++s) {
    synth::RandomSceneOptions o;
    o.width = 320;
    o.height = 240;
    o.num_frames = 4;
    const synth::SceneSpec spec = synth::random_scene("g" + std::to_string(s), o, 500 + s);
    for (std::size_t a = 0; a < spec.cameras.size(); ++a) {
      for (std::size_t b = 0; b < spec.cameras.size(); ++b) {
        if (a == b) {
          continue;
        }
        const CameraModel &ca = spec.cameras[a].second;
        const CameraModel &cb = spec.cameras[b].second;
        for (int k = 0; k < 200; ++k) {
          const double u = rng.uniform(0.0, o.width - 1.0);
          const double v = rng.uniform(0.0, o.height - 1.0);
          const auto hit = synth::cast_pixel(spec, ca, u, v);
          if (!hit) {
            continue;
          }
          const auto want = synth::project_world(cb, hit->point);
          const auto got = reproject_point(u, v, hit->depth, ca, cb);
          if (!want || (*want)(2) <= 1e-9) {
            continue;
          }
          if (!got) {
            return {false, fmt("reproject_point dropped a point in front of the camera (z=%.3g)", (*want)(2))};
          }
          const double err = std::hypot((*got)(0) - (*want)(0), (*got)(1) - (*want)(1));
          worst_px = std::max(worst_px, err);
          ++points;
        }
      }
    }
  }

  // Fronto-parallel box on the optical axis seen from a near and a far camera.
  double worst_ratio = 0.0;
  for (const auto &[z, dz] : std::vector<std::pair<double, double>>{{3.0, 0.5}, {3.5, 1.0}, {4.0, 1.5}, {4.5, 0.3}}) {
    synth::SceneSpec spec;
    spec.scene_id = "fwd";
    spec.width = 640;
    spec.height = 480;
    synth::Box box;
    box.id = 1;
    box.category = "panel";
    box.half_extent = {1.2, 0.9, 0.2};
    box.center = {0.0, 0.0, z + 0.2};
    box.pattern = 1;
    spec.boxes.push_back(box);
    spec.cameras.push_back({"near", synth::make_camera(640, 480, 0.8, {0.0, 0.0, dz}, 0, 0, 0)});
    spec.cameras.push_back({"far", synth::make_camera(640, 480, 0.8, {0.0, 0.0, 0.0}, 0, 0, 0)});
    const SceneBundle b = synth::render(spec);
    const ViewFrame &near = b.frame("near");
    const ViewFrame &far = b.frame("far");
    const PixelMask mask = PixelMask::from_instance(near.instances, 1);
    const PixelMask out = reproject_mask(mask, near.depth, near.camera, far.camera, 640, 480);
    if (out.empty()) {
      return {false, "forward-translation mask vanished"};
    }
    const double expected = std::pow(z / (z - dz), 2.0);
    const double measured = static_cast<double>(mask.area()) / static_cast<double>(out.area());
    worst_ratio = std::max(worst_ratio, std::abs(measured / expected - 1.0));
  }

  // Constructed rolls.
  double worst_roll = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const CameraModel a = synth::make_camera(64, 48, 1.0, {rng.uniform(-2, 2), rng.uniform(-1, 1), rng.uniform(-2, 2)},
                                             rng.uniform(-180, 180), rng.uniform(-30, 30), rng.uniform(-20, 20));
    const double deg = rng.uniform(-179.0, 179.0);
    CameraModel b = a;
    b.world_from_camera.topLeftCorner<3, 3>() =
        a.rotation() * axis_angle(Eigen::Vector3d::UnitZ(), deg * std::numbers::pi / 180.0);
    b.world_from_camera.topRightCorner<3, 1>() += Eigen::Vector3d(rng.uniform(-1, 1), 0.0, rng.uniform(-1, 1));
    worst_roll = std::max(worst_roll, std::abs(camera_roll_deg(a, b) - deg));
  }

  const double secs = seconds_since(t0);
  const bool pass = points > 1000 && worst_px <= 1e-6 && worst_ratio <= 0.02 && worst_roll <= 1e-9 && secs < 10.0;
  return {pass, fmt("%lld points max reprojection error %.2e px (<=1e-6); forward-translation area ratio max "
                    "deviation %.2f%% (<=2%%); roll max error %.2e deg (<=1e-9); %.1f s (<10)",
                    points, worst_px, worst_ratio * 100.0, worst_roll, secs)};
}

// ------------------------------------------------------ triplet equivalence

Outcome triplet_equivalence(const Context &) {
  const auto t0 = Clock::now();
  Rng rng(202);
  int bundles = 0, agree = 0;
  long long passing = 0, candidates = 0, overlap_rejects = 0;
  std::string first_mismatch;
  for (int i = 0; i < 60; ++i) {
    const int frames = 3 + static_cast<int>(rng.below(3));
    const int objects = 3 + static_cast<int>(rng.below(6));
    const SceneBundle b = testing::micro_bundle(9000 + i, frames, objects, 64, 48);
    SelectionConfig cfg;
    cfg.overlap_max = std::vector<double>{0.5, 0.75, 0.9, 1.0}[rng.below(4)];
    cfg.area_min = rng.uniform(0.005, 0.04);
    cfg.area_max = cfg.area_min + rng.uniform(0.02, 0.4);
    cfg.proj_area_min = rng.uniform(0.2, 0.6);
    cfg.visibility_floor_px = 10 + static_cast<long long>(rng.below(30));
    cfg.rng_seed = rng.next();

    std::set<oracle::CandidateKey> got;
    for (const auto &c : enumerate_candidates(b, cfg)) {
      ++candidates;
      if (c.verdict->passed()) {
        got.insert({c.v1_id, c.v2_id, c.v3_id, c.object_id});
      } else if (std::any_of(c.verdict->failures.begin(), c.verdict->failures.end(), [](FailReason r) {
                   return r == FailReason::kOverlapV1V2 || r == FailReason::kOverlapV2V3;
                 })) {
        ++overlap_rejects;
      }
    }
    const auto want = oracle::pass_set(b, cfg);
    ++bundles;
    passing += static_cast<long long>(want.size());
    if (got == want) {
      ++agree;
    } else if (first_mismatch.empty()) {
      first_mismatch = fmt(" first mismatch on %s (%zu vs %zu)", b.scene_id.c_str(), got.size(), want.size());
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = agree == bundles && bundles >= 50 && passing > 0 && secs < 60.0;
  return {pass, fmt("%d/%d bundles agree (%lld candidates, %lld passing, %lld overlap rejections); %.1f s (<60)%s",
                    agree, bundles, candidates, passing, overlap_rejects, secs, first_mismatch.c_str())};
}

// ---------------------------------------------------- compositor contracts

std::vector<EditRecipe> recipes_for(const TripletCandidate &c, std::uint64_t seed) {
  std::vector<EditRecipe> out;
  auto add = [&](Variant v, double e, std::optional<int> k) {
    EditRecipe r;
    r.candidate = c;
    r.variant = v;
    r.expansion = e;
    r.extra_objects = k;
    r.rng_seed = seed;
    out.push_back(r);
  };
  add(Variant::kInconsistent, 0.05, std::nullopt);
  add(Variant::kSelfPaste, 0.05, std::nullopt);
  add(Variant::kSelfPaste, 0.0, std::nullopt);
  add(Variant::kNoChange, 0.05, std::nullopt);
  add(Variant::kMultiSelfPaste, 0.05, 1);
  add(Variant::kMultiSelfPaste, 0.05, 3);
  add(Variant::kMultiSelfPaste, 0.05, std::nullopt);
  for (const double e : {0.0, 0.25, 1.0}) {
    add(Variant::kExpansionSweep, e, std::nullopt);
  }
  return out;
}

Outcome compositor_contracts(const Context &) {
  synth::RandomSceneOptions o;
  o.width = 256;
  o.height = 192;
  o.num_frames = 5;
  o.num_objects = 10;
  o.num_occluders = 3;
  const auto bundles = synth_bundles(4, o, 303);
  SelectionConfig cfg;
  cfg.area_min = 0.01;
  cfg.area_max = 0.2;
  cfg.overlap_max = 0.95;
  cfg.proj_area_min = 0.3;
  cfg.visibility_floor_px = 40;
  int pairs = 0, good = 0;
  long long restored_px = 0, self_px = 0;
  std::string first_failure;
  for (const auto &b : bundles) {
    const auto picked = sample_passing(b, cfg, 3, 3);
    for (const auto &c : picked.candidates) {
      for (const EditRecipe &r : recipes_for(c, 7)) {
        EditedPair p;
        try {
          p = make_pair(b, r);
        } catch (const Error &e) {
          ++pairs;
          if (first_failure.empty()) {
            first_failure = std::string(" error: ") + e.what();
          }
          continue;
        }
        ++pairs;
        const ViewFrame &v2 = b.frame(c.v2_id);
        bool ok = p.view2_edited.width() == v2.width() && p.view2_edited.height() == v2.height();
        if (r.variant == Variant::kNoChange) {
          ok = ok && p.view2_edited == v2.rgb;
        }
        for (int y = 0; ok && y < v2.height(); ++y) {
          for (int x = 0; ok && x < v2.width(); ++x) {
            const InstanceId id = v2.instances.at(x, y);
            const bool equal = same_pixel(p.view2_edited, v2.rgb, x, y);
            if (!p.inpaint_region.test(x, y)) {
              ok = equal; // (a)
            } else if (id != 0 && id != c.object_id) {
              ok = equal; // (b)
              ++restored_px;
            } else if (id == c.object_id && r.variant == Variant::kSelfPaste) {
              ok = equal; // (c)
              ++self_px;
            }
          }
        }
        if (ok) {
          ++good;
        } else if (first_failure.empty()) {
          first_failure = " first failure: " + p.pair_id;
        }
      }
    }
  }
  const bool pass = pairs > 0 && good == pairs && restored_px > 0 && self_px > 0;
  return {pass, fmt("%d/%d pairs satisfy all pixel contracts across 5 variants (%lld restored occluder px, %lld "
                    "self-paste object px checked)%s",
                    good, pairs, restored_px, self_px, first_failure.c_str())};
}

// ----------------------------------------------------- inpaint invariants

RgbImage random_image(Rng &rng, int w, int h) {
  RgbImage img(w, h);
  const int period = 3 + static_cast<int>(rng.below(10));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool stripe = ((x + y * (1 + static_cast<int>(rng.below(2)))) / period) % 2 == 0;
      img.at(x, y, 0) = static_cast<std::uint8_t>(stripe ? 200 : 40 + rng.below(30));
      img.at(x, y, 1) = static_cast<std::uint8_t>((x * 255) / std::max(1, w - 1));
      img.at(x, y, 2) = static_cast<std::uint8_t>(rng.below(256));
    }
  }
  return img;
}

PixelMask random_hole(Rng &rng, int w, int h) {
  PixelMask m(w, h);
  const int blobs = 1 + static_cast<int>(rng.below(3));
  for (int b = 0; b < blobs; ++b) {
    const int bw = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(w / 3)));
    const int bh = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(h / 3)));
    const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - bw + 1)));
    const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - bh + 1)));
    const bool ellipse = rng.below(2) == 0;
    for (int y = y0; y < y0 + bh; ++y) {
      for (int x = x0; x < x0 + bw; ++x) {
        const double dx = (x - x0 - bw / 2.0) / (bw / 2.0);
        const double dy = (y - y0 - bh / 2.0) / (bh / 2.0);
        if (!ellipse || dx * dx + dy * dy <= 1.0) {
          m.set(x, y);
        }
      }
    }
  }
  return m;
}

Outcome inpaint_invariants(const Context &) {
  Rng rng(404);
  int exact = 0, deterministic = 0;
  for (int i = 0; i < 100; ++i) {
    const int w = 24 + static_cast<int>(rng.below(80));
    const int h = 24 + static_cast<int>(rng.below(60));
    const RgbImage img = random_image(rng, w, h);
    const PixelMask hole = random_hole(rng, w, h);
    InpaintParams p;
    p.rng_seed = rng.next();
    const RgbImage a = inpaint_native(img, hole, p);
    const RgbImage b = inpaint_native(img, hole, p);
    bool outside = a.width() == w && a.height() == h;
    for (int y = 0; outside && y < h; ++y) {
      for (int x = 0; outside && x < w; ++x) {
        outside = hole.test(x, y) || same_pixel(a, img, x, y);
      }
    }
    exact += outside;
    deterministic += png::encode_rgb(a) == png::encode_rgb(b);
  }
  int monotone = 0;
  long long steps = 0;
  for (int i = 0; i < 10; ++i) {
    const int w = 96 + static_cast<int>(rng.below(64));
    const int h = 72 + static_cast<int>(rng.below(48));
    const RgbImage img = random_image(rng, w, h);
    const PixelMask hole = random_hole(rng, w, h);
    PatchMatchTrace trace;
    inpaint_native(img, hole, InpaintParams{}, &trace);
    bool ok = !trace.levels.empty();
    for (const auto &level : trace.levels) {
      for (std::size_t k = 1; k < level.energy.size(); ++k) {
        ok = ok && level.energy[k] <= level.energy[k - 1];
        ++steps;
      }
    }
    monotone += ok;
  }
  const bool pass = exact == 100 && deterministic == 100 && monotone == 10;
  return {pass, fmt("outside-hole exact %d/100; byte-identical reruns %d/100; energy non-increasing %d/10 (%lld "
                    "iteration steps)",
                    exact, deterministic, monotone, steps)};
}

// ---------------------------------------------------- labeling invariants

Outcome labeling_invariants(const Context &) {
  Rng rng(505);
  int agree = 0, answered = 0, capped = 0, above_floor = 0, expected_errors = 0;
  const int sizes[][2] = {{1024, 768}, {640, 480}, {320, 240}, {1280, 960}};
  for (int i = 0; i < 1000; ++i) {
    const int *dims = sizes[rng.below(4)];
    const LabelingConfig cfg;
    const ScaledThresholds t = scaled_thresholds(dims[0], dims[1], cfg);
    std::map<InstanceId, long long> areas;
    const int n = 1 + static_cast<int>(rng.below(45));
    for (int k = 0; k < n; ++k) {
      areas[static_cast<InstanceId>(k + 1)] = static_cast<long long>(rng.below(static_cast<std::uint64_t>(t.threshold * 4)));
    }
    const InstanceId answer = static_cast<InstanceId>(1 + rng.below(static_cast<std::uint64_t>(n)));
    const auto want = oracle::select_labels(areas, answer, t.threshold, t.floor, cfg.max_labels, cfg.min_labels);
    std::optional<std::vector<InstanceId>> got;
    try {
      got = select_by_area(areas, answer, t, cfg);
    } catch (const UnlabelableError &) {
    }
    if (!want) {
      expected_errors += !got.has_value();
      agree += !got.has_value();
      answered += 1;
      capped += 1;
      above_floor += 1;
      continue;
    }
    agree += got.has_value() && *got == *want;
    if (!got) {
      continue;
    }
    answered += std::find(got->begin(), got->end(), answer) != got->end();
    capped += got->size() <= 26;
    above_floor += std::all_of(got->begin(), got->end(), [&](InstanceId id) { return areas[id] >= t.floor; });
  }
  const bool pass = agree == 1000 && answered == 1000 && capped == 1000 && above_floor == 1000;
  return {pass, fmt("oracle agreement %d/1000; answer labeled %d/1000; <=26 labels %d/1000; none below floor "
                    "%d/1000 (%d vectors correctly rejected as unlabelable)",
                    agree, answered, capped, above_floor, expected_errors)};
}

// -------------------------------------------------------------- statistics

Outcome statistics(const Context &) {
  Rng rng(606);
  long long configs = 0, ensemble_ok = 0, scale_ok = 0, scale_checks = 0;
  for (int models = 1; models <= 5; ++models) {
    for (int items = 1; items <= 20; ++items) {
      for (int rep = 0; rep < 4; ++rep) {
        ++configs;
        BenchmarkManifest m;
        for (int i = 0; i < items; ++i) {
          BenchmarkItem it;
          it.pair_id = fmt("i%02d", i);
          it.num_labels = 4;
          it.answer_letter = static_cast<char>('A' + rng.below(4));
          m.items.push_back(it);
        }
        std::vector<ModelVotes> votes(static_cast<std::size_t>(models));
        for (int k = 0; k < models; ++k) {
          votes[k].name = "m" + std::to_string(k);
          // coarse accuracies so equal weights, and hence ties, are common
          votes[k].accuracy = (1 + rng.below(4)) / 4.0;
          for (const auto &it : m.items) {
            votes[k].answers[it.pair_id] =
                rng.below(6) == 0 ? std::nullopt : std::optional<char>(static_cast<char>('A' + rng.below(4)));
          }
        }
        const EnsembleResult e = ensemble(votes, "m0", m);
        bool ok = true;
        long long correct = 0;
        std::vector<double> w;
        for (const auto &v : votes) {
          w.push_back(v.accuracy / votes[0].accuracy);
        }
        for (const auto &it : m.items) {
          std::vector<std::optional<char>> ballot;
          for (const auto &v : votes) {
            ballot.push_back(v.answers.at(it.pair_id));
          }
          const auto want = oracle::weighted_vote(ballot, w);
          ok = ok && e.letters.at(it.pair_id) == want;
          correct += want == it.answer_letter;
          for (const double c : {0.1, 1.0, 10.0}) {
            std::vector<double> scaled;
            for (const double x : w) {
              scaled.push_back(x * c);
            }
            ++scale_checks;
            scale_ok += weighted_vote(ballot, scaled) == weighted_vote(ballot, w);
          }
        }
        ok = ok && std::abs(e.accuracy - static_cast<double>(correct) / items) < 1e-12;
        ensemble_ok += ok;
      }
    }
  }

  int corr_ok = 0;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int n = 2 + static_cast<int>(rng.below(80));
    std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n));
    const bool ties = i % 2 == 1;
    for (int k = 0; k < n; ++k) {
      x[k] = ties ? static_cast<double>(rng.below(5)) : rng.uniform(-10, 10);
      y[k] = ties ? static_cast<double>(rng.below(5)) : rng.uniform(-10, 10);
    }
    const auto p = stats::pearson(x, y);
    const auto t = stats::kendall_tau_b(x, y);
    const double po = oracle::pearson(x, y);
    const double to = oracle::kendall_tau_b(x, y);
    const bool pok = p ? std::abs(*p - po) <= 1e-12 : std::isnan(po);
    const bool tok = t ? std::abs(*t - to) <= 1e-12 : std::isnan(to);
    if (p) {
      worst = std::max(worst, std::abs(*p - po));
    }
    if (t) {
      worst = std::max(worst, std::abs(*t - to));
    }
    corr_ok += pok && tok;
  }

  int tert_ok = 0;
  for (int i = 0; i < 1000; ++i) {
    const int n = 3 + static_cast<int>(rng.below(300));
    std::vector<double> v(static_cast<std::size_t>(n));
    const int distinct = i % 3 == 0 ? 0 : 1 + static_cast<int>(rng.below(8));
    for (auto &x : v) {
      x = distinct > 0 ? static_cast<double>(rng.below(static_cast<std::uint64_t>(distinct))) : rng.uniform(0, 100);
    }
    const auto t = stats::tertile_bins(v);
    const int hi = std::max({t.population[0], t.population[1], t.population[2]});
    const int lo = std::min({t.population[0], t.population[1], t.population[2]});
    tert_ok += hi - lo <= 1 && stats::bins_consistent(v, t.bins, t.edge1, t.edge2);
  }

  const bool pass = ensemble_ok == configs && scale_ok == scale_checks && corr_ok == 100 && tert_ok == 1000;
  return {pass, fmt("ensemble matches oracle on %lld/%lld configurations (1-5 models x 1-20 items); scaling "
                    "invariance %lld/%lld; Pearson/Kendall within 1e-12 on %d/100 (max diff %.1e); tertiles "
                    "balanced %d/1000",
                    ensemble_ok, configs, scale_ok, scale_checks, corr_ok, worst, tert_ok)};
}

// -------------------------------------------------------- random guesser

void write_item_images(const BenchmarkManifest &m, const fs::path &dir) {
  for (const auto &it : m.items) {
    fs::create_directories(dir / it.pair_id);
    png::write_rgb(dir / it.view1, RgbImage(4, 4, 1));
    png::write_rgb(dir / it.view2, RgbImage(4, 4, 2));
  }
}

std::string valid_from_prompt(const std::string &text) {
  const auto at = text.find("Valid answers: ");
  std::string out;
  if (at == std::string::npos) {
    return out;
  }
  for (std::size_t i = at + 15; i < text.size() && text[i] != '.'; ++i) {
    if (text[i] >= 'A' && text[i] <= 'Z') {
      out.push_back(text[i]);
    }
  }
  return out;
}

Outcome random_guesser(const Context &) {
  const auto t0 = Clock::now();
  const BenchmarkManifest m = testing::synthetic_manifest(1000, 707);
  testing::TempDir dir("forge_rg");
  write_item_images(m, dir.path());
  testing::MockServer server;
  std::mutex mu;
  Rng rng(708);
  server.post("/v1/chat/completions", [&](const httplib::Request &req) {
    const std::string valid = valid_from_prompt(testing::request_text(nlohmann::json::parse(req.body)));
    char letter = '?';
    {
      std::lock_guard lock(mu);
      letter = valid.empty() ? '?' : valid[rng.below(valid.size())];
    }
    return testing::MockResponse{200, testing::chat_reply(std::string("My guess: ") + letter).dump()};
  });
  server.start();
  const int passes = 10;
  long long correct = 0, total = 0, failures = 0;
  for (int pass = 0; pass < passes; ++pass) {
    ChatEndpoint ep;
    ep.name = "random" + std::to_string(pass);
    ep.base_url = server.url() + "/v1";
    ep.model = "uniform";
    ep.max_concurrency = 4;
    ChatClient client(ep);
    for (const Trial &t : run_eval(m, dir.path(), client, nullptr)) {
      ++total;
      correct += t.correct;
      failures += t.status != TrialStatus::kOk;
    }
  }
  const double p = expected_random_accuracy(m);
  double var = 0.0;
  for (const auto &it : m.items) {
    const double q = 1.0 / it.num_labels;
    var += passes * q * (1.0 - q);
  }
  const double sigma = std::sqrt(var) / static_cast<double>(total);
  const double acc = static_cast<double>(correct) / static_cast<double>(total);
  const double z = (acc - p) / sigma;
  const double secs = seconds_since(t0);
  const bool pass = total >= 10000 && failures == 0 && std::abs(z) <= 3.0 && secs < 30.0;
  return {pass, fmt("%lld trials over HTTP: accuracy %.4f vs expected %.4f, sigma %.4f, z = %+.2f (|z|<=3); %lld "
                    "non-ok trials; %.1f s (<30)",
                    total, acc, p, sigma, z, failures, secs)};
}

// ------------------------------------------------------ mock end-to-end

Outcome mock_end_to_end(const Context &ctx) {
  testing::TempDir dir("forge_e2e");
  const std::string bin = ctx.forge_bin.string();
  const fs::path root = dir.path();
  auto step = [&](const std::string &args) { return run_command(bin + " " + args); };
  if (step("synth --out " + (root / "scenes").string() + " --scenes 12 --seed 11 --width 320 --height 240") != 0) {
    return {false, "forge synth failed"};
  }
  const fs::path sel_cfg = root / "select.json";
  {
    std::ofstream(sel_cfg) << R"({"area_min":0.01,"area_max":0.2,"overlap_max":0.95,"proj_area_min":0.3,"visibility_floor_px":40})";
  }
  if (step("select --bundles " + (root / "scenes").string() + " --config " + sel_cfg.string() +
           " --n 2 --cap 2 --seed 3 --out " + (root / "cands_all.jsonl").string()) != 0) {
    return {false, "forge select failed"};
  }
  auto cands = read_jsonl(root / "cands_all.jsonl");
  if (cands.size() < 20) {
    return {false, fmt("only %zu candidates selected", cands.size())};
  }
  cands.resize(20);
  write_jsonl(root / "cands.jsonl", cands);
  if (step("generate --candidates " + (root / "cands.jsonl").string() + " --bundles " + (root / "scenes").string() +
           " --seed 5 --workers 2 --out " + (root / "pairs").string()) != 0) {
    return {false, "forge generate failed"};
  }
  if (step("build-manifest --pairs " + (root / "pairs").string() + " --out " + (root / "manifest.jsonl").string()) != 0) {
    return {false, "forge build-manifest failed"};
  }
  const BenchmarkManifest m = read_manifest(root / "manifest.jsonl");

  // The key-reading model recognizes each item by its image bytes.
  std::map<std::string, char> key_by_image;
  long long answer_a = 0;
  for (const auto &it : m.items) {
    key_by_image[base64_encode(png::read_file(root / it.view1)) + "|" + base64_encode(png::read_file(root / it.view2))] =
        it.answer_letter;
    answer_a += it.answer_letter == 'A';
  }
  testing::MockServer server;
  server.post("/oracle/chat/completions", [&](const httplib::Request &req) {
    const auto images = testing::request_images(nlohmann::json::parse(req.body));
    const auto hit = images.size() != 2 ? key_by_image.end() : key_by_image.find(images[0] + "|" + images[1]);
    const std::string reply = hit == key_by_image.end() ? "unknown" : std::string("Answer: ") + hit->second;
    return testing::MockResponse{200, testing::chat_reply(reply).dump()};
  });
  server.post("/always_a/chat/completions",
              [&](const httplib::Request &) { return testing::MockResponse{200, testing::chat_reply("A").dump()}; });
  server.start();
  for (const std::string name : {"oracle", "always_a"}) {
    ChatEndpoint ep;
    ep.name = name;
    ep.base_url = server.url() + "/" + name;
    ep.model = name;
    std::ofstream(root / (name + ".json")) << to_json(ep).dump();
    if (step("eval --manifest " + (root / "manifest.jsonl").string() + " --endpoint " +
             (root / (name + ".json")).string() + " --out " + (root / "trials.jsonl").string()) != 0) {
      return {false, "forge eval failed for " + name};
    }
  }
  if (step("report --trials " + (root / "trials.jsonl").string() + " --manifest " +
           (root / "manifest.jsonl").string() + " --out " + (root / "report.json").string()) != 0) {
    return {false, "forge report failed"};
  }
  const auto report = nlohmann::json::parse(slurp(root / "report.json"));
  const auto acc = [&](const std::string &model) {
    const auto &o = report.at("models").at(model).at("overall");
    return std::make_pair(o.at("accuracy").get<double>(), o.at("total").get<long long>());
  };
  const auto [oracle_acc, oracle_n] = acc("oracle");
  const auto [a_acc, a_n] = acc("always_a");
  const double want_a = static_cast<double>(answer_a) / static_cast<double>(m.items.size());
  const bool pass = m.items.size() == 20 && oracle_n == 20 && a_n == 20 && oracle_acc == 1.0 &&
                    std::abs(a_acc - want_a) < 1e-12;
  return {pass, fmt("%zu pairs through synth/select/generate/build-manifest/eval/report; key-reading model %.1f%% "
                    "(want 100%%); always-A %.1f%% (want %lld/%zu = %.1f%%)",
                    m.items.size(), oracle_acc * 100.0, a_acc * 100.0, answer_a, m.items.size(), want_a * 100.0)};
}

// ------------------------------------------------------------- throughput

Outcome throughput(const Context &) {
  synth::RandomSceneOptions o;
  o.width = 1024;
  o.height = 768;
  o.num_frames = 5;
  o.num_objects = 10;
  o.num_occluders = 2;
  std::vector<std::shared_ptr<const SceneBundle>> bundles;
  for (auto &b : synth_bundles(8, o, 7)) {
    bundles.push_back(std::make_shared<const SceneBundle>(std::move(b)));
  }
  const SelectionConfig selection;
  GenerateOptions g;
  g.seed = 7;
  std::map<int, ThroughputReport> by_workers;
  for (const int w : {1, 8}) {
    g.workers = w;
    by_workers[w] = generation_throughput(bundles, selection, g, 2, 16);
    std::cout << "  stage report: " << to_json(by_workers[w]).dump() << "\n";
  }
  const auto &one = by_workers[1];
  const auto &eight = by_workers[8];
  if (!one.pairs_per_sec || !eight.pairs_per_sec) {
    return {false, "no pairs produced"};
  }
  const double speedup = *eight.pairs_per_sec / *one.pairs_per_sec;
  const unsigned cores = std::thread::hardware_concurrency();
  const bool pass = *one.pairs_per_sec >= 1.0 && speedup >= 4.0;
  return {pass, fmt("single worker %.2f pairs/s over %zu pairs (>=1); 8 workers %.2f pairs/s, scaling %.2fx (>=4) on "
                    "%u hardware thread(s); 1-worker stages select %.2f s, inpaint %.2f s, paste %.2f s, encode %.2f s",
                    *one.pairs_per_sec, one.pairs, *eight.pairs_per_sec, speedup, cores, one.stage_totals.select_s,
                    one.stage_totals.inpaint_s, one.stage_totals.paste_s, one.stage_totals.encode_s)};
}

// ---------------------------------------------------------- expansion sweep

Outcome expansion_sweep(const Context &ctx) {
  testing::TempDir dir("forge_sweep");
  const fs::path root = dir.path();
  const std::string bin = ctx.forge_bin.string();
  if (run_command(bin + " synth --out " + (root / "scenes").string() +
                  " --scenes 3 --seed 21 --width 256 --height 192 --objects 12") != 0) {
    return {false, "forge synth failed"};
  }
  {
    std::ofstream(root / "select.json")
        << R"({"area_min":0.01,"area_max":0.2,"overlap_max":0.95,"proj_area_min":0.3,"visibility_floor_px":40})";
  }
  if (run_command(bin + " select --bundles " + (root / "scenes").string() + " --config " +
                  (root / "select.json").string() + " --n 2 --out " + (root / "cands.jsonl").string()) != 0) {
    return {false, "forge select failed"};
  }
  if (run_command(bin + " generate --candidates " + (root / "cands.jsonl").string() + " --bundles " +
                  (root / "scenes").string() + " --sweep all --seed 2 --out " + (root / "sweep").string()) != 0) {
    return {false, "forge generate --sweep failed"};
  }
  struct Want {
    std::string variant;
    double expansion;
    std::optional<int> k;
  };
  std::map<std::string, Want> wanted;
  for (const auto &t : expansion_sweep_treatments()) {
    wanted[t.name] = {to_string(t.variant), t.expansion, t.extra_objects};
  }
  for (const auto &t : self_paste_count_treatments(0.05)) {
    wanted[t.name] = {to_string(t.variant), t.expansion, t.extra_objects};
  }
  std::set<double> expansions;
  std::set<std::string> counts;
  std::set<std::string> digests;
  std::set<std::string> pair_ids;
  long long items = 0, schema_ok = 0;
  int manifests = 0;
  static const char *const kItemFields[] = {
      "pair_id",    "scene_id",     "view1",    "view2",           "answer_letter",  "num_labels",
      "depth_m",    "depth_bin",    "brightness", "light_bin",     "plausibility",   "roll_deg",
      "object_category", "scene_category", "variant", "expansion", "provenance"};
  for (const auto &[name, want] : wanted) {
    const fs::path mpath = root / "sweep" / name / "manifest.jsonl";
    if (!fs::exists(mpath)) {
      return {false, "missing manifest for treatment " + name};
    }
    ++manifests;
    digests.insert(sha256_hex(slurp(mpath)));
    const auto records = read_jsonl(mpath);
    for (const auto &rec : records) {
      if (rec.value("record", "") != "item") {
        continue;
      }
      ++items;
      bool ok = true;
      for (const char *f : kItemFields) {
        ok = ok && rec.contains(f);
      }
      if (!ok) {
        continue;
      }
      const auto &recipe = rec.at("provenance").at("recipe");
      ok = rec.at("variant") == want.variant && std::abs(rec.at("expansion").get<double>() - want.expansion) < 1e-12 &&
           recipe.at("variant") == want.variant &&
           std::abs(recipe.at("expansion").get<double>() - want.expansion) < 1e-12;
      if (want.variant == "multi_self_paste") {
        const auto &k = recipe.at("extra_objects");
        ok = ok && (want.k ? k == *want.k : k == "all");
        ok = ok && rec.at("provenance").at("extra_objects").is_array();
      }
      ok = ok && fs::exists(root / "sweep" / name / rec.at("view1").get<std::string>());
      ok = ok && pair_ids.insert(rec.at("pair_id").get<std::string>()).second;
      schema_ok += ok;
      if (want.variant == "expansion_sweep") {
        expansions.insert(want.expansion);
      } else {
        counts.insert(want.k ? std::to_string(*want.k) : "all");
      }
    }
  }
  const bool matrix = expansions == std::set<double>{0.0, 0.05, 0.10, 0.25, 0.50, 0.75, 1.00} &&
                      counts == std::set<std::string>{"1", "3", "5", "10", "all"};
  const bool pass = manifests == 12 && static_cast<int>(digests.size()) == manifests && matrix && items > 0 &&
                    schema_ok == items;
  return {pass, fmt("%d treatment manifests (%zu distinct); expansions {0,5,10,25,50,75,100}%% %s; self-paste "
                    "counts {1,3,5,10,all} %s; provenance schema %lld/%lld items",
                    manifests, digests.size(), matrix ? "present" : "incomplete", matrix ? "present" : "incomplete",
                    schema_ok, items)};
}

const std::vector<std::pair<std::string, std::function<Outcome(const Context &)>>> kCriteria = {
    {"geometry", geometry},
    {"triplet_equivalence", triplet_equivalence},
    {"compositor_contracts", compositor_contracts},
    {"inpaint_invariants", inpaint_invariants},
    {"labeling_invariants", labeling_invariants},
    {"statistics", statistics},
    {"random_guesser", random_guesser},
    {"mock_end_to_end", mock_end_to_end},
    {"throughput", throughput},
    {"expansion_sweep", expansion_sweep},
};

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<std::string> selected;
  bool all = false;
  Context ctx;
  app.add_option("--criterion", selected, "Criterion to run (repeatable)");
  app.add_flag("--all", all, "Run every criterion");
  app.add_option("--forge", ctx.forge_bin, "Path to the forge CLI");
  CLI11_PARSE(app, argc, argv);
  if (all) {
    selected.clear();
    for (const auto &[name, fn] : kCriteria) {
      selected.push_back(name);
    }
  }
  if (selected.empty()) {
    std::cerr << "nothing selected; use --criterion NAME or --all\n";
    return 2;
  }
  int failed = 0;
  for (const auto &name : selected) {
    const auto it = std::find_if(kCriteria.begin(), kCriteria.end(), [&](const auto &c) { return c.first == name; });
    if (it == kCriteria.end()) {
      std::cerr << "unknown criterion " << name << "\n";
      return 2;
    }
    Outcome o;
    try {
      o = it->second(ctx);
    } catch (const std::exception &e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
