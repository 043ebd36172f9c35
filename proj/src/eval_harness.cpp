#include "forge/eval_harness.hpp"

#include "forge/png_io.hpp"
#include "forge/statistics.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <thread>

namespace forge {
namespace {

constexpr const char *kSystemPrompt =
    "You will see two photographs of the same static scene taken from different camera positions. Objects in the "
    "first photograph carry letter labels. Exactly one labeled object has been altered in the second photograph so "
    "that its appearance there cannot be reconciled with the first view under any camera motion: it is 3D-inconsistent. "
    "Every other object is unchanged.";

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string lowercase_trim(const std::string &s) {
  std::string out;
  for (const char c : s) {
    if (std::isspace(static_cast<unsigned char>(c)) == 0) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

std::vector<std::uint8_t> read_png_bytes(const std::filesystem::path &p) { return png::read_file(p); }

nlohmann::json accuracy_json(long long correct, long long total) {
  nlohmann::json j = {{"correct", correct}, {"total", total}};
  j["accuracy"] = total > 0 ? nlohmann::json(static_cast<double>(correct) / static_cast<double>(total)) : nlohmann::json();
  return j;
}

} // namespace

std::string letter_list(std::string_view valid) {
  std::string s;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (i > 0) {
      s += ", ";
    }
    s.push_back(valid[i]);
  }
  return s;
}

Prompt build_prompt(const BenchmarkItem &item, const std::filesystem::path &base_dir) {
  Prompt p;
  p.valid = item.valid_letters();
  p.system = kSystemPrompt;
  p.user = "Image 1 is the labeled first view; image 2 is the second view. Which letter marks the 3D-inconsistent "
           "object? Valid answers: " +
           letter_list(p.valid) +
           ". You may reason briefly first, but the final line of your reply must be just one letter from the valid "
           "answers.";
  p.image1 = base_dir / item.view1;
  p.image2 = base_dir / item.view2;
  return p;
}

std::vector<ChatMessage> prompt_messages(const Prompt &prompt) {
  return {{"system", prompt.system, {}},
          {"user", prompt.user, {read_png_bytes(prompt.image1), read_png_bytes(prompt.image2)}}};
}

std::optional<char> parse_letter(std::string_view raw, std::string_view valid) {
  std::string s;
  s.reserve(raw.size());
  for (const char c : raw) {
    if (c != '*' && c != '_' && c != '`' && c != '~') {
      s.push_back(c);
    }
  }
  std::optional<char> found;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c < 'A' || c > 'Z' || valid.find(c) == std::string_view::npos) {
      continue;
    }
    if ((i > 0 && is_alnum(s[i - 1])) || (i + 1 < s.size() && is_alnum(s[i + 1]))) {
      continue;
    }
    if ((c == 'A' || c == 'I') && i + 2 < s.size() && s[i + 1] == ' ' &&
        std::islower(static_cast<unsigned char>(s[i + 2])) != 0) {
      continue; // article or pronoun
    }
    found = c;
  }
  return found;
}

const char *to_string(TrialStatus s) {
  switch (s) {
  case TrialStatus::kOk:
    return "ok";
  case TrialStatus::kParseFailure:
    return "parse_failure";
  case TrialStatus::kTransportFailure:
    return "transport_failure";
  }
  return "?";
}

nlohmann::json to_json(const Trial &t) {
  nlohmann::json j = {{"pair_id", t.pair_id},
                      {"model", t.model},
                      {"prompt_version", t.prompt_version},
                      {"raw_response", t.raw_response},
                      {"correct", t.correct},
                      {"latency_ms", t.latency_ms},
                      {"ts", t.ts},
                      {"status", to_string(t.status)}};
  j["parsed_letter"] = t.parsed_letter ? nlohmann::json(std::string(1, *t.parsed_letter)) : nlohmann::json();
  if (t.duplicate) {
    j["duplicate"] = true;
  }
  if (!t.session_id.empty()) {
    j["session_id"] = t.session_id;
  }
  return j;
}

Trial trial_from_json(const nlohmann::json &j) {
  Trial t;
  t.pair_id = j.at("pair_id").get<std::string>();
  t.model = j.at("model").get<std::string>();
  t.prompt_version = j.value("prompt_version", "");
  t.raw_response = j.value("raw_response", "");
  if (j.contains("parsed_letter") && j["parsed_letter"].is_string() && !j["parsed_letter"].get<std::string>().empty()) {
    t.parsed_letter = j["parsed_letter"].get<std::string>()[0];
  }
  t.correct = j.at("correct").get<bool>();
  t.latency_ms = j.value("latency_ms", 0.0);
  t.ts = j.value("ts", 0LL);
  const std::string status = j.value("status", t.parsed_letter ? "ok" : "parse_failure");
  t.status = status == "transport_failure" ? TrialStatus::kTransportFailure
             : status == "parse_failure"   ? TrialStatus::kParseFailure
                                           : TrialStatus::kOk;
  t.duplicate = j.value("duplicate", false);
  t.session_id = j.value("session_id", "");
  return t;
}

std::vector<Trial> read_trials(const std::filesystem::path &path) {
  std::vector<Trial> out;
  for (const auto &j : read_jsonl(path)) {
    out.push_back(trial_from_json(j));
  }
  return out;
}

long long now_unix_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

Trial make_trial(const BenchmarkItem &item, const std::string &model, const std::string &raw, double latency_ms) {
  Trial t;
  t.pair_id = item.pair_id;
  t.model = model;
  t.raw_response = raw;
  t.latency_ms = latency_ms;
  t.ts = now_unix_ms();
  t.parsed_letter = parse_letter(raw, item.valid_letters());
  t.status = t.parsed_letter ? TrialStatus::kOk : TrialStatus::kParseFailure;
  t.correct = t.parsed_letter && *t.parsed_letter == item.answer_letter;
  return t;
}

std::vector<Trial> run_eval(const BenchmarkManifest &manifest, const std::filesystem::path &base_dir,
                            const ChatClient &client, JsonlAppender *log, const EvalOptions &options) {
  std::vector<const BenchmarkItem *> todo;
  for (const auto &item : manifest.items) {
    if (options.skip.count(item.pair_id) == 0) {
      todo.push_back(&item);
    }
  }
  std::vector<Trial> results(todo.size());
  const std::string &model = client.endpoint().name;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < todo.size(); i = next++) {
      const BenchmarkItem &item = *todo[i];
      Trial t;
      try {
        const ChatResult r = client.complete(prompt_messages(build_prompt(item, base_dir)));
        t = make_trial(item, model, r.text, r.latency_ms);
      } catch (const TransportError &e) {
        t.pair_id = item.pair_id;
        t.model = model;
        t.raw_response = e.what();
        t.ts = now_unix_ms();
        t.status = TrialStatus::kTransportFailure;
      }
      if (log != nullptr) {
        log->append(to_json(t));
      }
      results[i] = std::move(t);
    }
  };
  const int n = std::max(1, std::min<int>(options.workers > 0 ? options.workers : client.endpoint().max_concurrency,
                                          static_cast<int>(std::max<std::size_t>(1, todo.size()))));
  {
    std::vector<std::jthread> pool;
    for (int i = 0; i < n; ++i) {
      pool.emplace_back(worker);
    }
  }
  return results;
}

std::string label_bucket(int n) {
  if (n < 5) {
    return "<5";
  }
  if (n <= 10) {
    return "5-10";
  }
  if (n <= 15) {
    return "11-15";
  }
  if (n <= 20) {
    return "16-20";
  }
  return "21-26";
}

nlohmann::json score(const std::vector<Trial> &trials, const BenchmarkManifest &manifest, const ScoreOptions &options) {
  std::map<std::string, long long> category_items;
  for (const auto &item : manifest.items) {
    ++category_items[item.object_category];
  }
  auto object_stratum = [&](const BenchmarkItem &item) {
    return category_items[item.object_category] < options.misc_min_items ? std::string("misc") : item.object_category;
  };

  std::map<std::string, std::map<std::string, std::vector<const Trial *>>> by_model;
  std::set<std::string> prompt_versions;
  std::set<std::string> unknown;
  for (const Trial &t : trials) {
    if (manifest.find(t.pair_id) == nullptr) {
      unknown.insert(t.pair_id);
      continue;
    }
    auto &slot = by_model[t.model][t.pair_id];
    if (!t.duplicate) {
      slot.push_back(&t);
    }
    if (!t.prompt_version.empty()) {
      prompt_versions.insert(t.prompt_version);
    }
  }

  nlohmann::json models = nlohmann::json::object();
  for (const auto &[model, per_item] : by_model) {
    struct Tally {
      long long correct = 0;
      long long total = 0;
    };
    Tally overall;
    std::map<std::string, std::map<std::string, Tally>> strata;
    long long missing = 0, parse_failures = 0, transport_failures = 0;
    for (const auto &item : manifest.items) {
      const auto it = per_item.find(item.pair_id);
      std::vector<bool> outcomes;
      if (it == per_item.end() || it->second.empty()) {
        ++missing;
        if (!options.strict) {
          continue;
        }
        outcomes.push_back(false);
      } else {
        for (const Trial *t : it->second) {
          outcomes.push_back(t->correct);
          parse_failures += t->status == TrialStatus::kParseFailure;
          transport_failures += t->status == TrialStatus::kTransportFailure;
        }
      }
      const std::pair<const char *, std::string> keys[] = {
          {"depth", item.depth_bin},
          {"light", item.light_bin},
          {"plausibility", item.plausible ? "plausible" : "implausible"},
          {"num_labels", label_bucket(item.num_labels)},
          {"object_category", object_stratum(item)},
          {"scene_category", item.scene_category},
          {"variant", item.variant},
      };
      for (const bool ok : outcomes) {
        overall.correct += ok;
        ++overall.total;
        for (const auto &[stratum, value] : keys) {
          Tally &tl = strata[stratum][value];
          tl.correct += ok;
          ++tl.total;
        }
      }
    }
    nlohmann::json s = nlohmann::json::object();
    for (const auto &[stratum, values] : strata) {
      for (const auto &[value, tl] : values) {
        s[stratum][value] = accuracy_json(tl.correct, tl.total);
      }
    }
    models[model] = {{"overall", accuracy_json(overall.correct, overall.total)},
                     {"strata", s},
                     {"missing", missing},
                     {"parse_failures", parse_failures},
                     {"transport_failures", transport_failures}};
  }
  return {{"num_items", manifest.items.size()},
          {"strict", options.strict},
          {"prompt_versions", prompt_versions},
          {"unknown_pairs", unknown},
          {"models", models}};
}

std::optional<char> weighted_vote(const std::vector<std::optional<char>> &votes, const std::vector<double> &weights) {
  std::map<char, double> sums;
  for (std::size_t i = 0; i < votes.size(); ++i) {
    if (votes[i]) {
      sums[*votes[i]] += weights[i];
    }
  }
  if (sums.empty()) {
    return std::nullopt;
  }
  double best = -std::numeric_limits<double>::infinity();
  for (const auto &[letter, s] : sums) {
    best = std::max(best, s);
  }
  for (const auto &[letter, s] : sums) { // map order = alphabetical
    if (s >= best - 1e-9 * std::fabs(best)) {
      return letter;
    }
  }
  return std::nullopt;
}

EnsembleResult ensemble(const std::vector<ModelVotes> &models, const std::string &baseline,
                        const BenchmarkManifest &manifest) {
  const auto base = std::find_if(models.begin(), models.end(), [&](const ModelVotes &m) { return m.name == baseline; });
  if (base == models.end()) {
    throw Error("ensemble: baseline model " + baseline + " not among the inputs");
  }
  if (!(base->accuracy > 0.0)) {
    throw Error("ensemble: baseline model " + baseline + " has zero accuracy");
  }
  EnsembleResult out;
  for (const auto &m : models) {
    out.weights.push_back(m.accuracy / base->accuracy);
  }
  long long correct = 0;
  for (const auto &item : manifest.items) {
    std::vector<std::optional<char>> votes;
    for (const auto &m : models) {
      const auto it = m.answers.find(item.pair_id);
      votes.push_back(it == m.answers.end() ? std::nullopt : it->second);
    }
    const auto letter = weighted_vote(votes, out.weights);
    out.letters[item.pair_id] = letter;
    correct += letter && *letter == item.answer_letter;
  }
  out.accuracy = manifest.items.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(manifest.items.size());
  return out;
}

ModelVotes model_votes(const std::vector<Trial> &trials, const std::string &model, const BenchmarkManifest &manifest) {
  ModelVotes v;
  v.name = model;
  long long correct = 0;
  for (const Trial &t : trials) {
    if (t.model != model || t.duplicate || manifest.find(t.pair_id) == nullptr || v.answers.count(t.pair_id) != 0) {
      continue;
    }
    v.answers[t.pair_id] = t.parsed_letter;
    correct += t.correct;
  }
  v.accuracy = manifest.items.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(manifest.items.size());
  return v;
}

std::set<std::string> wrong_set(const std::vector<Trial> &trials, const std::string &model) {
  std::set<std::string> seen, wrong;
  for (const Trial &t : trials) {
    if (t.model == model && !t.duplicate && seen.insert(t.pair_id).second && !t.correct) {
      wrong.insert(t.pair_id);
    }
  }
  return wrong;
}

double wrong_set_iou(const std::set<std::string> &wa, const std::set<std::string> &wb) {
  if (wa.empty() && wb.empty()) {
    return 1.0;
  }
  std::size_t inter = 0;
  for (const auto &id : wa) {
    inter += wb.count(id);
  }
  return static_cast<double>(inter) / static_cast<double>(wa.size() + wb.size() - inter);
}

std::optional<double> same_wrong_fraction(const std::vector<Trial> &trials, const std::string &model_a,
                                          const std::string &model_b) {
  auto answers = [&](const std::string &model) {
    std::map<std::string, const Trial *> m;
    for (const Trial &t : trials) {
      if (t.model == model && !t.duplicate) {
        m.emplace(t.pair_id, &t);
      }
    }
    return m;
  };
  const auto a = answers(model_a);
  const auto b = answers(model_b);
  long long common = 0, same = 0;
  for (const auto &[id, ta] : a) {
    const auto it = b.find(id);
    if (ta->correct || it == b.end() || it->second->correct) {
      continue;
    }
    ++common;
    same += ta->parsed_letter && it->second->parsed_letter && *ta->parsed_letter == *it->second->parsed_letter;
  }
  if (common == 0) {
    return std::nullopt;
  }
  return static_cast<double>(same) / static_cast<double>(common);
}

std::optional<double> human_also_wrong_fraction(const std::set<std::string> &human_wrong,
                                                const std::set<std::string> &model_wrong) {
  if (human_wrong.empty()) {
    return std::nullopt;
  }
  std::size_t both = 0;
  for (const auto &id : human_wrong) {
    both += model_wrong.count(id);
  }
  return static_cast<double>(both) / static_cast<double>(human_wrong.size());
}

std::map<std::string, double> human_item_accuracy(const std::vector<Trial> &trials) {
  std::map<std::string, std::pair<long long, long long>> acc;
  for (const Trial &t : trials) {
    if (t.model.rfind("human:", 0) == 0 && !t.duplicate) {
      acc[t.pair_id].first += t.correct;
      ++acc[t.pair_id].second;
    }
  }
  std::map<std::string, double> out;
  for (const auto &[id, c] : acc) {
    out[id] = static_cast<double>(c.first) / static_cast<double>(c.second);
  }
  return out;
}

std::set<std::string> human_wrong_set(const std::vector<Trial> &trials) {
  std::set<std::string> out;
  for (const auto &[id, a] : human_item_accuracy(trials)) {
    if (a < 0.5) {
      out.insert(id);
    }
  }
  return out;
}

const char *const kVqaCaptionPrompt = "Write one short sentence describing what this image shows.";

std::string vqa_question(const std::string &caption) {
  return "Do these frames depict the following: " + caption + " Reply with Yes or No.";
}

double yes_probability(const ChatResult &result, const std::string &judge_name) {
  if (!result.first_token_logprobs || result.first_token_logprobs->empty()) {
    throw CapabilityError("judge " + judge_name + " returned no token probabilities; VQAScore needs logprobs");
  }
  double p = 0.0;
  for (const auto &alt : *result.first_token_logprobs) {
    if (lowercase_trim(alt.token) == "yes") {
      p += std::exp(alt.logprob);
    }
  }
  return std::clamp(p, 0.0, 1.0);
}

VqaSummary summarize_vqa(const std::vector<VqaItem> &items, const std::map<std::string, double> &human_accuracy) {
  VqaSummary s;
  s.n = items.size();
  double wins = 0.0;
  std::vector<double> edited, human;
  for (const auto &it : items) {
    wins += it.yes_consistent > it.yes_edited ? 1.0 : (it.yes_consistent == it.yes_edited ? 0.5 : 0.0);
    const auto h = human_accuracy.find(it.pair_id);
    if (h != human_accuracy.end()) {
      edited.push_back(it.yes_edited);
      human.push_back(h->second);
    }
  }
  s.pairwise_acc = items.empty() ? 0.0 : wins / static_cast<double>(items.size());
  s.pearson_r = stats::pearson(edited, human);
  s.kendall_tau = stats::kendall_tau_b(edited, human);
  return s;
}

std::vector<VqaItem> run_vqascore(const BenchmarkManifest &manifest, const std::filesystem::path &base_dir,
                                  const ChatClient &captioner, const ChatClient &judge) {
  std::vector<VqaItem> out;
  for (const auto &item : manifest.items) {
    const auto dir1 = (base_dir / item.view1).parent_path();
    const auto dir2 = (base_dir / item.view2).parent_path();
    const auto v1 = read_png_bytes(dir1 / "view1_clean.png");
    const auto v2 = read_png_bytes(dir2 / "view2_orig.png");
    const auto v2e = read_png_bytes(base_dir / item.view2);
    VqaItem r;
    r.pair_id = item.pair_id;
    r.caption = captioner.complete({{"user", kVqaCaptionPrompt, {v1}}}).text;
    const std::string q = vqa_question(r.caption);
    r.yes_consistent = yes_probability(judge.complete({{"user", q, {v1, v2}}}, 5), judge.endpoint().name);
    r.yes_edited = yes_probability(judge.complete({{"user", q, {v1, v2e}}}, 5), judge.endpoint().name);
    out.push_back(std::move(r));
  }
  return out;
}

nlohmann::json to_json(const VqaItem &item) {
  return {{"pair_id", item.pair_id},
          {"caption", item.caption},
          {"yes_score_consistent", item.yes_consistent},
          {"yes_score_edited", item.yes_edited}};
}

nlohmann::json to_json(const VqaSummary &s) {
  auto opt = [](const std::optional<double> &v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  return {{"n", s.n}, {"pairwise_acc", s.pairwise_acc}, {"pearson_r", opt(s.pearson_r)}, {"kendall_tau", opt(s.kendall_tau)}};
}

} // namespace forge
