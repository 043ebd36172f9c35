#include "forge/pipeline.hpp"

#include "forge/jsonl.hpp"
#include "forge/png_io.hpp"
#include "forge/rng.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

namespace forge {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::uint64_t fnv1a(const std::string &s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

nlohmann::json rect_json(const Rect &r) { return {r.x, r.y, r.w, r.h}; }

void write_text(const std::filesystem::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
}

void add(StageTimes &into, const StageTimes &t) {
  into.select_s += t.select_s;
  into.inpaint_s += t.inpaint_s;
  into.paste_s += t.paste_s;
  into.encode_s += t.encode_s;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <typename F> void parallel_for(std::size_t n, int workers, F &&fn) {
  std::atomic<std::size_t> next{0};
  auto loop = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      fn(i);
    }
  };
  const int threads = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (threads == 1) {
    loop();
    return;
  }
  std::vector<std::jthread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back(loop);
  }
}

} // namespace

std::size_t GenerateReport::ok_count() const {
  return static_cast<std::size_t>(std::count_if(pairs.begin(), pairs.end(), [](const GeneratedPair &p) { return p.error.empty(); }));
}

std::vector<SceneBundle> synth_bundles(int num_scenes, const synth::RandomSceneOptions &options, std::uint64_t seed) {
  std::vector<SceneBundle> out;
  for (int i = 0; i < num_scenes; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "synth_%03d", i);
    out.push_back(synth::render(synth::random_scene(name, options, derive_seed(seed, static_cast<std::uint64_t>(i)))));
  }
  return out;
}

std::vector<std::string> synth_corpus(const std::filesystem::path &out_dir, int num_scenes,
                                      const synth::RandomSceneOptions &options, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const SceneBundle &b : synth_bundles(num_scenes, options, seed)) {
    write_bundle(b, out_dir / b.scene_id);
    ids.push_back(b.scene_id);
  }
  return ids;
}

std::map<std::string, std::shared_ptr<const SceneBundle>> load_bundles(const std::filesystem::path &root) {
  std::map<std::string, std::shared_ptr<const SceneBundle>> out;
  if (std::filesystem::exists(root / "manifest.json")) {
    auto b = std::make_shared<SceneBundle>(load_bundle(root));
    out[b->scene_id] = std::move(b);
    return out;
  }
  std::vector<std::filesystem::path> dirs;
  for (const auto &entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "manifest.json")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto &d : dirs) {
    auto b = std::make_shared<SceneBundle>(load_bundle(d));
    out[b->scene_id] = std::move(b);
  }
  return out;
}

GeneratedPair generate_pair(const SceneBundle &bundle, const TripletCandidate &candidate, const GenerateOptions &options,
                            const std::optional<std::filesystem::path> &out_dir) {
  EditRecipe recipe;
  recipe.candidate = candidate;
  recipe.variant = options.variant;
  recipe.expansion = options.expansion;
  recipe.extra_objects = options.variant == Variant::kMultiSelfPaste ? options.extra_objects : std::nullopt;
  recipe.backend = options.backend;
  GeneratedPair gp;
  gp.pair_id = make_pair_id(recipe);
  recipe.rng_seed = derive_seed(options.seed, fnv1a(gp.pair_id));

  try {
    auto t = Clock::now();
    const ViewFrame &v1 = bundle.frame(candidate.v1_id);
    const ViewFrame &v2 = bundle.frame(candidate.v2_id);
    const ViewFrame &v3 = bundle.frame(candidate.v3_id);
    const InstanceId answer = candidate.object_id;
    const auto objects = select_labelable(v1.instances, answer, options.labeling);
    const LabelAssignment assignment = assign_letters(v1.instances, objects, answer);
    gp.times.select_s = seconds_since(t);

    EditTimings edit;
    const EditedPair pair = make_pair(bundle, recipe, options.labeling, &edit);
    gp.times.inpaint_s = edit.inpaint_s;
    gp.times.paste_s = edit.paste_s;

    t = Clock::now();
    const RgbImage labeled = render_labels(pair.view1, assignment, options.style);
    const auto view1_png = png::encode_rgb(labeled, options.png_compression);
    const auto view2_png = png::encode_rgb(pair.view2_edited, options.png_compression);

    PairMeta meta;
    meta.pair_id = pair.pair_id;
    meta.scene_id = bundle.scene_id;
    meta.variant = to_string(recipe.variant);
    meta.expansion = recipe.expansion;
    meta.answer_object = answer;
    const auto info = bundle.instance_table.find(answer);
    meta.object_category = info == bundle.instance_table.end() ? "unknown" : info->second.category;
    meta.depth_m = object_depth(v1, answer);
    meta.brightness = pair_brightness(pair.view1, pair.view2_edited);
    const Plausibility pl = plausibility(v2.camera, v3.camera);
    meta.roll_deg = pl.roll_deg;
    meta.roll_degenerate = pl.degenerate;

    nlohmann::json labels = nlohmann::json::array();
    for (const LabelEntry &e : assignment.entries) {
      labels.push_back({{"letter", std::string(1, e.letter)},
                        {"object_id", e.object_id},
                        {"anchor", {e.anchor.x, e.anchor.y}},
                        {"area_px", e.area_px}});
    }
    const ScaledThresholds thr = scaled_thresholds(v1.width(), v1.height(), options.labeling);
    meta.provenance = {
        {"recipe", to_json(recipe)},
        {"candidate", to_json(candidate)},
        {"paste_transform", pair.paste_transform ? to_json(*pair.paste_transform) : nlohmann::json()},
        {"inpaint_region", {{"bbox", rect_json(pair.inpaint_region.bbox())}, {"area_px", pair.inpaint_region.area()}}},
        {"extra_objects", pair.extra_objects},
        {"labels", labels},
        {"label_thresholds_px", {{"threshold", thr.threshold}, {"floor", thr.floor}}},
        {"inpaint_params",
         {{"patch_size", options.backend.params.patch_size},
          {"iterations_per_level", options.backend.params.iterations_per_level},
          {"min_level_side", options.backend.params.min_level_side}}},
        {"image_size", {v2.width(), v2.height()}},
    };

    if (out_dir) {
      const auto dir = *out_dir / pair.pair_id;
      std::filesystem::create_directories(dir);
      png::write_file(dir / "view1.png", view1_png);
      png::write_file(dir / "view2.png", view2_png);
      if (options.write_twins) {
        png::write_file(dir / "view1_clean.png", png::encode_rgb(pair.view1, options.png_compression));
        png::write_file(dir / "view2_orig.png", png::encode_rgb(v2.rgb, options.png_compression));
      }
      write_text(dir / "meta.json", to_json(meta).dump(2) + "\n");
    }
    gp.times.encode_s = seconds_since(t);
    gp.key = make_answer_key(pair.pair_id, assignment, bundle.instance_table);
    gp.meta = std::move(meta);
  } catch (const std::exception &e) {
    gp.error = e.what();
  }
  return gp;
}

GenerateReport generate_pairs(const std::map<std::string, std::shared_ptr<const SceneBundle>> &bundles,
                              const std::vector<TripletCandidate> &candidates, const GenerateOptions &options,
                              const std::optional<std::filesystem::path> &out_dir) {
  GenerateReport report;
  report.pairs.resize(candidates.size());
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
  }
  const auto start = Clock::now();
  parallel_for(candidates.size(), options.workers, [&](std::size_t i) {
    const auto it = bundles.find(candidates[i].scene_id);
    if (it == bundles.end()) {
      report.pairs[i].error = "no bundle for scene " + candidates[i].scene_id;
      return;
    }
    report.pairs[i] = generate_pair(*it->second, candidates[i], options, out_dir);
  });
  report.wall_s = seconds_since(start);
  std::vector<nlohmann::json> keys, failures;
  for (std::size_t i = 0; i < report.pairs.size(); ++i) {
    const GeneratedPair &p = report.pairs[i];
    add(report.totals, p.times);
    if (p.error.empty()) {
      keys.push_back(to_json(*p.key));
    } else {
      failures.push_back({{"pair_id", p.pair_id}, {"candidate", to_json(candidates[i])}, {"error", p.error}});
    }
  }
  if (out_dir) {
    write_jsonl(*out_dir / "keys.jsonl", keys);
    write_jsonl(*out_dir / "failures.jsonl", failures);
  }
  return report;
}

BenchmarkManifest manifest_from_pairs_dir(const std::filesystem::path &pairs_dir, const std::filesystem::path &keys_path,
                                          const std::filesystem::path &manifest_path, const nlohmann::json &config,
                                          bool allow_partial) {
  std::vector<std::filesystem::path> dirs;
  for (const auto &entry : std::filesystem::directory_iterator(pairs_dir)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "meta.json")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  const auto base = std::filesystem::absolute(manifest_path).parent_path();
  std::vector<ManifestInput> inputs;
  for (const auto &d : dirs) {
    std::ifstream in(d / "meta.json");
    ManifestInput mi;
    mi.meta = pair_meta_from_json(nlohmann::json::parse(in));
    mi.view1 = std::filesystem::relative(std::filesystem::absolute(d / "view1.png"), base).generic_string();
    mi.view2 = std::filesystem::relative(std::filesystem::absolute(d / "view2.png"), base).generic_string();
    inputs.push_back(std::move(mi));
  }
  std::vector<AnswerKey> keys;
  for (const auto &j : read_jsonl(keys_path)) {
    keys.push_back(answer_key_from_json(j));
  }
  return build_manifest(inputs, keys, config, allow_partial);
}

std::vector<SweepTreatment> expansion_sweep_treatments() {
  std::vector<SweepTreatment> out;
  for (const int pct : {0, 5, 10, 25, 50, 75, 100}) {
    out.push_back({"expansion_e" + std::to_string(pct), Variant::kExpansionSweep, pct / 100.0, std::nullopt});
  }
  return out;
}

std::vector<SweepTreatment> self_paste_count_treatments(double expansion) {
  std::vector<SweepTreatment> out;
  for (const int k : {1, 3, 5, 10}) {
    out.push_back({"multi_k" + std::to_string(k), Variant::kMultiSelfPaste, expansion, k});
  }
  out.push_back({"multi_kall", Variant::kMultiSelfPaste, expansion, std::nullopt});
  return out;
}

std::vector<SweepResult> run_sweep(const std::map<std::string, std::shared_ptr<const SceneBundle>> &bundles,
                                   const std::vector<TripletCandidate> &candidates,
                                   const std::vector<SweepTreatment> &treatments, const GenerateOptions &base,
                                   const std::filesystem::path &out_dir) {
  std::vector<SweepResult> out;
  for (const SweepTreatment &t : treatments) {
    GenerateOptions opts = base;
    opts.variant = t.variant;
    opts.expansion = t.expansion;
    opts.extra_objects = t.extra_objects;
    const auto dir = out_dir / t.name;
    const GenerateReport report = generate_pairs(bundles, candidates, opts, dir);
    nlohmann::json config = {{"treatment", t.name},
                             {"variant", to_string(t.variant)},
                             {"expansion", t.expansion},
                             {"seed", base.seed}};
    if (t.variant == Variant::kMultiSelfPaste) {
      config["extra_objects"] = t.extra_objects ? nlohmann::json(*t.extra_objects) : nlohmann::json("all");
    }
    const auto manifest_path = dir / "manifest.jsonl";
    const BenchmarkManifest m = manifest_from_pairs_dir(dir, dir / "keys.jsonl", manifest_path, config);
    write_manifest(m, manifest_path);
    out.push_back({t, manifest_path, report.ok_count()});
  }
  return out;
}

nlohmann::json to_json(const ThroughputReport &r) {
  return {{"pairs", r.pairs},
          {"workers", r.workers},
          {"wall_s", r.wall_s},
          {"pairs_per_sec", r.pairs_per_sec ? nlohmann::json(*r.pairs_per_sec) : nlohmann::json()},
          {"stage_seconds",
           {{"select", r.stage_totals.select_s},
            {"inpaint", r.stage_totals.inpaint_s},
            {"paste", r.stage_totals.paste_s},
            {"encode", r.stage_totals.encode_s}}}};
}

ThroughputReport generation_throughput(const std::vector<std::shared_ptr<const SceneBundle>> &bundles,
                                       const SelectionConfig &selection, const GenerateOptions &options,
                                       std::size_t pairs_per_scene, std::size_t max_pairs) {
  ThroughputReport report;
  report.workers = options.workers;
  if (max_pairs == 0 || bundles.empty()) {
    return report;
  }
  GenerateOptions per_job = options;
  per_job.workers = 1;
  SelectionConfig sel = selection;
  sel.workers = 1;
  std::atomic<std::size_t> produced{0};
  std::mutex mu;
  const auto start = Clock::now();
  parallel_for(bundles.size(), options.workers, [&](std::size_t i) {
    if (produced.load() >= max_pairs) {
      return;
    }
    StageTimes local;
    auto t = Clock::now();
    const SampleResult picked = sample_passing(*bundles[i], sel, pairs_per_scene, pairs_per_scene);
    local.select_s += seconds_since(t);
    std::size_t made = 0;
    for (const TripletCandidate &c : picked.candidates) {
      if (produced.load() >= max_pairs) {
        break;
      }
      const GeneratedPair gp = generate_pair(*bundles[i], c, per_job, std::nullopt);
      add(local, gp.times);
      if (gp.error.empty()) {
        ++made;
        ++produced;
      }
    }
    std::lock_guard lock(mu);
    add(report.stage_totals, local);
    report.pairs += made;
  });
  report.wall_s = seconds_since(start);
  if (report.pairs > 0) {
    report.pairs_per_sec = static_cast<double>(report.pairs) / report.wall_s;
  }
  return report;
}

} // namespace forge
