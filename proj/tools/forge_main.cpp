#include "forge/benchmark_build.hpp"
#include "forge/chat_client.hpp"
#include "forge/eval_harness.hpp"
#include "forge/jsonl.hpp"
#include "forge/pipeline.hpp"
#include "forge/png_io.hpp"
#include "forge/study_http.hpp"
#include "forge/study_service.hpp"
#include "forge/triplet_select.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace forge;

namespace {

json read_json_file(const fs::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  return json::parse(in);
}

void write_text(const fs::path &path, const std::string &text) {
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << text;
}

// Writes to `out` when given, stdout otherwise.
void emit(const json &j, const std::string &out) {
  const std::string text = j.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text(out, text);
  }
}

// An endpoint config file, or a bare base URL with the model name given separately.
ChatEndpoint load_endpoint(const std::string &spec, const std::string &model) {
  if (fs::is_regular_file(spec)) {
    return chat_endpoint_from_json(read_json_file(spec));
  }
  ChatEndpoint e;
  e.name = model.empty() ? "labeler" : model;
  e.base_url = spec;
  e.model = model;
  return e;
}

std::vector<Trial> read_all_trials(const std::vector<std::string> &paths) {
  std::vector<Trial> out;
  for (const auto &p : paths) {
    auto t = read_trials(p);
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

std::map<std::string, std::shared_ptr<const SceneBundle>> bundles_from_args(const std::vector<std::string> &dirs,
                                                                           const std::string &root) {
  std::map<std::string, std::shared_ptr<const SceneBundle>> out;
  if (!root.empty()) {
    out = load_bundles(root);
  }
  for (const auto &d : dirs) {
    auto b = std::make_shared<SceneBundle>(load_bundle(d));
    out[b->scene_id] = std::move(b);
  }
  return out;
}

std::vector<TripletCandidate> read_candidates(const fs::path &path) {
  std::vector<TripletCandidate> out;
  for (const json &j : read_jsonl(path)) {
    out.push_back(candidate_from_json(j));
  }
  return out;
}

StudyServer *g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) {
    g_server->stop();
  }
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"forge: multi-view inconsistency benchmark pipeline"};
  app.require_subcommand(1);

  // synth
  auto *synth_cmd = app.add_subcommand("synth", "Render a synthetic scene corpus");
  std::string synth_out;
  int synth_scenes = 4;
  std::uint64_t synth_seed = 0;
  synth::RandomSceneOptions synth_opts;
  synth_cmd->add_option("--out", synth_out, "Output root")->required();
  synth_cmd->add_option("--scenes", synth_scenes, "Number of scenes");
  synth_cmd->add_option("--seed", synth_seed);
  synth_cmd->add_option("--width", synth_opts.width);
  synth_cmd->add_option("--height", synth_opts.height);
  synth_cmd->add_option("--frames", synth_opts.num_frames);
  synth_cmd->add_option("--objects", synth_opts.num_objects);

  // select
  auto *select_cmd = app.add_subcommand("select", "Sample passing triplet candidates");
  std::vector<std::string> select_bundles;
  std::string select_root, select_config, select_out;
  std::size_t select_n = 2;
  std::optional<std::uint64_t> select_seed;
  std::optional<std::size_t> select_cap = 2;
  int select_workers = 1;
  select_cmd->add_option("--bundle", select_bundles, "Scene bundle directory (repeatable)");
  select_cmd->add_option("--bundles", select_root, "Directory of scene bundles");
  select_cmd->add_option("--config", select_config, "Selection config JSON");
  select_cmd->add_option("--n", select_n, "Passing candidates per scene");
  select_cmd->add_option("--seed", select_seed);
  select_cmd->add_option("--cap", select_cap, "Per-scene cap");
  select_cmd->add_option("--workers", select_workers);
  select_cmd->add_option("--out", select_out)->required();

  // generate
  auto *gen_cmd = app.add_subcommand("generate", "Build edited pairs from candidates");
  std::string gen_candidates, gen_root, gen_out, gen_variant = "inconsistent", gen_backend = "native", gen_endpoint;
  std::string gen_sweep, gen_extra;
  GenerateOptions gen_opts;
  int gen_timeout_ms = 30000;
  gen_cmd->add_option("--candidates", gen_candidates)->required();
  gen_cmd->add_option("--bundles", gen_root, "Directory of scene bundles")->required();
  gen_cmd->add_option("--variant", gen_variant);
  gen_cmd->add_option("--expansion", gen_opts.expansion);
  gen_cmd->add_option("--extra-objects", gen_extra, "multi_self_paste count or 'all'");
  gen_cmd->add_option("--backend", gen_backend)->check(CLI::IsMember({"native", "remote"}));
  gen_cmd->add_option("--endpoint", gen_endpoint, "Remote inpainter base URL");
  gen_cmd->add_option("--timeout-ms", gen_timeout_ms);
  gen_cmd->add_flag("!--no-fallback", gen_opts.backend.fallback_to_native, "Fail instead of falling back to native");
  gen_cmd->add_option("--seed", gen_opts.seed);
  gen_cmd->add_option("--workers", gen_opts.workers);
  gen_cmd->add_option("--sweep", gen_sweep, "expansion | self-paste | all")
      ->check(CLI::IsMember({"expansion", "self-paste", "all"}));
  gen_cmd->add_option("--out", gen_out)->required();

  // build-manifest
  auto *bm_cmd = app.add_subcommand("build-manifest", "Join pair metadata and keys into a manifest");
  std::string bm_pairs, bm_keys, bm_out, bm_labeler, bm_labeler_model;
  bool bm_categorize = false, bm_partial = false;
  bm_cmd->add_option("--pairs", bm_pairs)->required();
  bm_cmd->add_option("--keys", bm_keys, "Defaults to <pairs>/keys.jsonl");
  bm_cmd->add_option("--out", bm_out)->required();
  bm_cmd->add_flag("--allow-partial", bm_partial, "Drop pairs lacking a key instead of failing");
  bm_cmd->add_flag("--categorize", bm_categorize, "Assign scene categories with a labeler model");
  bm_cmd->add_option("--labeler-endpoint", bm_labeler, "Endpoint config JSON or base URL");
  bm_cmd->add_option("--labeler-model", bm_labeler_model);

  // eval
  auto *eval_cmd = app.add_subcommand("eval", "Query a model on every manifest item");
  std::string eval_manifest, eval_endpoint, eval_out;
  int eval_workers = 0;
  eval_cmd->add_option("--manifest", eval_manifest)->required();
  eval_cmd->add_option("--endpoint", eval_endpoint, "Endpoint config JSON")->required();
  eval_cmd->add_option("--out", eval_out, "Trial log (appended; answered items are skipped)")->required();
  eval_cmd->add_option("--workers", eval_workers);

  // report
  auto *report_cmd = app.add_subcommand("report", "Accuracy report per model and stratum");
  std::vector<std::string> report_trials;
  std::string report_manifest, report_out;
  ScoreOptions report_opts;
  report_cmd->add_option("--trials", report_trials)->required();
  report_cmd->add_option("--manifest", report_manifest)->required();
  report_cmd->add_flag("--strict", report_opts.strict, "Count items without a trial as wrong");
  report_cmd->add_option("--misc-min-items", report_opts.misc_min_items);
  report_cmd->add_option("--out", report_out);

  // ensemble
  auto *ens_cmd = app.add_subcommand("ensemble", "Accuracy-weighted vote across models");
  std::vector<std::string> ens_trials, ens_models;
  std::string ens_manifest, ens_baseline, ens_out;
  ens_cmd->add_option("--trials", ens_trials)->required();
  ens_cmd->add_option("--manifest", ens_manifest)->required();
  ens_cmd->add_option("--models", ens_models, "Models to combine (default: all non-human)")->delimiter(',');
  ens_cmd->add_option("--baseline", ens_baseline, "Model whose accuracy normalizes the weights")->required();
  ens_cmd->add_option("--out", ens_out);

  // vqascore
  auto *vqa_cmd = app.add_subcommand("vqascore", "Caption-and-judge consistency scoring");
  std::string vqa_manifest, vqa_captioner, vqa_judge, vqa_out;
  std::vector<std::string> vqa_human;
  vqa_cmd->add_option("--manifest", vqa_manifest)->required();
  vqa_cmd->add_option("--captioner", vqa_captioner, "Endpoint config JSON")->required();
  vqa_cmd->add_option("--judge", vqa_judge, "Endpoint config JSON (must return token logprobs)")->required();
  vqa_cmd->add_option("--human-trials", vqa_human, "Trial logs holding human:* answers");
  vqa_cmd->add_option("--out", vqa_out);

  // serve
  auto *serve_cmd = app.add_subcommand("serve", "Run the study/vetting HTTP service");
  std::string serve_manifest, serve_logs, serve_host = "127.0.0.1", serve_static;
  int serve_port = 8080;
  std::uint64_t serve_seed = 0;
  serve_cmd->add_option("--manifest", serve_manifest)->required();
  serve_cmd->add_option("--log-dir", serve_logs)->required();
  serve_cmd->add_option("--host", serve_host);
  serve_cmd->add_option("--port", serve_port);
  serve_cmd->add_option("--seed", serve_seed);
  serve_cmd->add_option("--static", serve_static, "Directory served at /");

  // export-curated
  auto *exp_cmd = app.add_subcommand("export-curated", "Manifest subset accepted during vetting");
  std::string exp_manifest, exp_logs, exp_out;
  std::size_t exp_cap = 2;
  exp_cmd->add_option("--manifest", exp_manifest)->required();
  exp_cmd->add_option("--log-dir", exp_logs)->required();
  exp_cmd->add_option("--cap", exp_cap, "Pairs per scene");
  exp_cmd->add_option("--out", exp_out)->required();

  // throughput
  auto *tp_cmd = app.add_subcommand("throughput", "Time selection and generation on a synthetic corpus");
  int tp_scenes = 8;
  std::vector<int> tp_workers{1};
  std::size_t tp_per_scene = 2, tp_max = 16;
  std::uint64_t tp_seed = 7;
  synth::RandomSceneOptions tp_scene_opts;
  tp_scene_opts.width = 1024;
  tp_scene_opts.height = 768;
  std::string tp_out;
  tp_cmd->add_option("--scenes", tp_scenes);
  tp_cmd->add_option("--workers", tp_workers)->delimiter(',');
  tp_cmd->add_option("--pairs-per-scene", tp_per_scene);
  tp_cmd->add_option("--max-pairs", tp_max);
  tp_cmd->add_option("--width", tp_scene_opts.width);
  tp_cmd->add_option("--height", tp_scene_opts.height);
  tp_cmd->add_option("--seed", tp_seed);
  tp_cmd->add_option("--out", tp_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) {
      for (const auto &id : synth_corpus(synth_out, synth_scenes, synth_opts, synth_seed)) {
        std::cout << id << "\n";
      }
    } else if (*select_cmd) {
      SelectionConfig cfg;
      if (!select_config.empty()) {
        cfg = selection_config_from_json(read_json_file(select_config));
      }
      if (select_seed) {
        cfg.rng_seed = *select_seed;
      }
      cfg.workers = select_workers;
      cfg.validate();
      const auto bundles = bundles_from_args(select_bundles, select_root);
      if (bundles.empty()) {
        throw Error("no scene bundles given (use --bundle or --bundles)");
      }
      std::vector<json> lines;
      for (const auto &[id, b] : bundles) {
        const SampleResult r = sample_passing(*b, cfg, select_n, select_cap);
        for (const auto &c : r.candidates) {
          lines.push_back(to_json(c));
        }
        if (r.exhausted) {
          std::cerr << id << ": only " << r.candidates.size() << " passing candidates\n";
        }
      }
      write_jsonl(select_out, lines);
      std::cerr << lines.size() << " candidates\n";
    } else if (*gen_cmd) {
      gen_opts.variant = variant_from_string(gen_variant);
      if (!gen_extra.empty() && gen_extra != "all") {
        gen_opts.extra_objects = std::stoi(gen_extra);
      }
      if (gen_backend == "remote") {
        if (gen_endpoint.empty()) {
          throw Error("--backend remote needs --endpoint");
        }
        gen_opts.backend.kind = InpaintBackend::Kind::kRemote;
        gen_opts.backend.endpoint = gen_endpoint;
        gen_opts.backend.timeout = std::chrono::milliseconds(gen_timeout_ms);
      }
      const auto bundles = load_bundles(gen_root);
      const auto candidates = read_candidates(gen_candidates);
      if (!gen_sweep.empty()) {
        std::vector<SweepTreatment> treatments;
        if (gen_sweep != "self-paste") {
          treatments = expansion_sweep_treatments();
        }
        if (gen_sweep != "expansion") {
          for (auto &t : self_paste_count_treatments(gen_opts.expansion)) {
            treatments.push_back(std::move(t));
          }
        }
        for (const auto &r : run_sweep(bundles, candidates, treatments, gen_opts, gen_out)) {
          std::cout << r.treatment.name << "\t" << r.pairs << "\t" << r.manifest_path.string() << "\n";
        }
      } else {
        const GenerateReport report = generate_pairs(bundles, candidates, gen_opts, fs::path(gen_out));
        std::cerr << report.ok_count() << "/" << report.pairs.size() << " pairs in " << report.wall_s << " s\n";
      }
    } else if (*bm_cmd) {
      const fs::path keys = bm_keys.empty() ? fs::path(bm_pairs) / "keys.jsonl" : fs::path(bm_keys);
      BenchmarkManifest m = manifest_from_pairs_dir(bm_pairs, keys, bm_out, json::object(), bm_partial);
      if (bm_categorize) {
        if (bm_labeler.empty()) {
          throw Error("--categorize needs --labeler-endpoint");
        }
        ChatClient labeler(load_endpoint(bm_labeler, bm_labeler_model));
        const fs::path base = fs::path(bm_out).parent_path();
        std::vector<SceneCategoryInput> inputs;
        for (const auto &item : m.items) {
          const fs::path dir = (base / item.view1).parent_path();
          inputs.push_back({item.pair_id, png::read_file(dir / "view1_clean.png"), png::read_file(dir / "view2_orig.png")});
        }
        const SceneCategorization cats = categorize_scenes(labeler, inputs);
        for (std::size_t i = 0; i < m.items.size(); ++i) {
          m.items[i].scene_category = cats.categories[i];
        }
        m.config["scene_labeler"] = {{"model", cats.model}, {"prompt_sha256", cats.prompt_sha256}};
        for (const auto &e : cats.errors) {
          std::cerr << "categorize: " << e << "\n";
        }
      }
      write_manifest(m, bm_out);
      std::cerr << m.items.size() << " items\n";
    } else if (*eval_cmd) {
      const BenchmarkManifest m = read_manifest(eval_manifest);
      ChatClient client(chat_endpoint_from_json(read_json_file(eval_endpoint)));
      EvalOptions opts;
      opts.workers = eval_workers;
      if (fs::exists(eval_out)) {
        for (const Trial &t : read_trials(eval_out)) {
          if (t.model == client.endpoint().name && t.status != TrialStatus::kTransportFailure) {
            opts.skip.insert(t.pair_id);
          }
        }
      }
      JsonlAppender log(eval_out);
      const auto trials = run_eval(m, fs::path(eval_manifest).parent_path(), client, &log, opts);
      std::cerr << trials.size() << " trials appended\n";
    } else if (*report_cmd) {
      const BenchmarkManifest m = read_manifest(report_manifest);
      emit(score(read_all_trials(report_trials), m, report_opts), report_out);
    } else if (*ens_cmd) {
      const BenchmarkManifest m = read_manifest(ens_manifest);
      const auto trials = read_all_trials(ens_trials);
      if (ens_models.empty()) {
        std::set<std::string> names;
        for (const auto &t : trials) {
          if (t.model.rfind("human:", 0) != 0) {
            names.insert(t.model);
          }
        }
        ens_models.assign(names.begin(), names.end());
      }
      std::vector<ModelVotes> votes;
      for (const auto &name : ens_models) {
        votes.push_back(model_votes(trials, name, m));
      }
      const EnsembleResult r = ensemble(votes, ens_baseline, m);
      json out = {{"baseline", ens_baseline}, {"accuracy", r.accuracy}, {"models", json::array()}};
      for (std::size_t i = 0; i < votes.size(); ++i) {
        out["models"].push_back({{"name", votes[i].name}, {"accuracy", votes[i].accuracy}, {"weight", r.weights[i]}});
      }
      json letters = json::object();
      for (const auto &[id, l] : r.letters) {
        letters[id] = l ? json(std::string(1, *l)) : json();
      }
      out["letters"] = letters;
      emit(out, ens_out);
    } else if (*vqa_cmd) {
      const BenchmarkManifest m = read_manifest(vqa_manifest);
      ChatClient captioner(chat_endpoint_from_json(read_json_file(vqa_captioner)));
      ChatClient judge(chat_endpoint_from_json(read_json_file(vqa_judge)));
      const auto items = run_vqascore(m, fs::path(vqa_manifest).parent_path(), captioner, judge);
      const auto human = human_item_accuracy(read_all_trials(vqa_human));
      json out = {{"summary", to_json(summarize_vqa(items, human))}, {"items", json::array()}};
      for (const auto &it : items) {
        out["items"].push_back(to_json(it));
      }
      emit(out, vqa_out);
    } else if (*serve_cmd) {
      StudyService service(read_manifest(serve_manifest), StudyConfig{serve_logs, serve_seed});
      std::optional<fs::path> static_dir;
      if (!serve_static.empty()) {
        static_dir = serve_static;
      }
      StudyServer server(service, fs::path(serve_manifest).parent_path(), static_dir);
      const int port = server.bind(serve_host, serve_port);
      std::cerr << "listening on " << serve_host << ":" << port << "\n";
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.serve();
      g_server = nullptr;
    } else if (*exp_cmd) {
      const BenchmarkManifest m = read_manifest(exp_manifest);
      std::vector<VetDecision> decisions;
      const fs::path vet_log = fs::path(exp_logs) / "vet.jsonl";
      if (fs::exists(vet_log)) {
        for (const json &j : read_jsonl(vet_log)) {
          decisions.push_back(vet_decision_from_json(j));
        }
      }
      const fs::path sessions = fs::path(exp_logs) / "sessions.jsonl";
      const auto coverage = fs::exists(sessions) ? coverage_from_log(sessions) : std::map<std::string, long long>{};
      CuratedExport ex = export_curated(m, decisions, coverage, exp_cap);
      // Image paths stay valid when the curated manifest lives elsewhere.
      const fs::path src_dir = fs::absolute(exp_manifest).parent_path();
      const fs::path dst_dir = fs::absolute(exp_out).parent_path();
      for (auto &item : ex.manifest.items) {
        item.view1 = fs::relative(src_dir / item.view1, dst_dir).generic_string();
        item.view2 = fs::relative(src_dir / item.view2, dst_dir).generic_string();
      }
      write_manifest(ex.manifest, exp_out);
      write_text(fs::path(exp_out).replace_extension(".sidecar.json"), ex.sidecar.dump(2) + "\n");
      std::cerr << ex.manifest.items.size() << " items exported\n";
    } else if (*tp_cmd) {
      std::vector<std::shared_ptr<const SceneBundle>> bundles;
      for (auto &b : synth_bundles(tp_scenes, tp_scene_opts, tp_seed)) {
        bundles.push_back(std::make_shared<SceneBundle>(std::move(b)));
      }
      json runs = json::array();
      for (const int w : tp_workers) {
        GenerateOptions opts;
        opts.workers = w;
        opts.seed = tp_seed;
        runs.push_back(to_json(generation_throughput(bundles, SelectionConfig{}, opts, tp_per_scene, tp_max)));
      }
      emit({{"width", tp_scene_opts.width}, {"height", tp_scene_opts.height}, {"runs", runs}}, tp_out);
    }
  } catch (const std::exception &e) {
    std::cerr << "forge: " << e.what() << "\n";
    if (const auto *me = dynamic_cast<const ManifestError *>(&e)) {
      for (const auto &id : me->missing()) {
        std::cerr << "  missing: " << id << "\n";
      }
    }
    return 1;
  }
  return 0;
}
