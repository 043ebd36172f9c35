#pragma once

#include "forge/benchmark_build.hpp"
#include "forge/chat_client.hpp"
#include "forge/jsonl.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace forge {

/// Bumped whenever the canonical prompt text changes; stored in every trial.
inline constexpr const char *kPromptVersion = "v1";

struct Prompt {
  std::string system;
  std::string user;
  std::filesystem::path image1; // labeled V1
  std::filesystem::path image2; // edited V2
  std::string valid;            // valid letters, e.g. "ABCDE"
};

std::string letter_list(std::string_view valid); // "A, B, C"

Prompt build_prompt(const BenchmarkItem &item, const std::filesystem::path &base_dir);
std::vector<ChatMessage> prompt_messages(const Prompt &prompt);

/// Last standalone capital letter from `valid`, after stripping markdown
/// emphasis characters. A lone "A" or "I" that starts a lowercase word
/// sequence ("A chair", "I think") is read as prose, not as an answer.
std::optional<char> parse_letter(std::string_view raw, std::string_view valid);

enum class TrialStatus { kOk, kParseFailure, kTransportFailure };
const char *to_string(TrialStatus s);

struct Trial {
  std::string pair_id;
  std::string model;
  std::string prompt_version = kPromptVersion;
  std::string raw_response;
  std::optional<char> parsed_letter;
  bool correct = false;
  double latency_ms = 0.0;
  long long ts = 0; // unix milliseconds
  TrialStatus status = TrialStatus::kOk;
  bool duplicate = false;
  std::string session_id;
};

nlohmann::json to_json(const Trial &t);
Trial trial_from_json(const nlohmann::json &j);
std::vector<Trial> read_trials(const std::filesystem::path &path);

long long now_unix_ms();

/// Parses `raw` against the item and fills letter, correctness and status.
Trial make_trial(const BenchmarkItem &item, const std::string &model, const std::string &raw, double latency_ms);

struct EvalOptions {
  /// 0 uses the endpoint's max_concurrency.
  int workers = 0;
  /// Pair IDs already answered by this model (e.g. from an existing log) are skipped.
  std::set<std::string> skip;
};

/// Queries every manifest item once. Each finished trial is appended to
/// `log` (when given) as soon as it completes; the returned list follows
/// manifest order.
std::vector<Trial> run_eval(const BenchmarkManifest &manifest, const std::filesystem::path &base_dir,
                            const ChatClient &client, JsonlAppender *log, const EvalOptions &options = {});

struct ScoreOptions {
  bool strict = false;        // items without a trial count as incorrect
  int misc_min_items = 10;    // object categories with fewer items fold into "misc"
};

std::string label_bucket(int num_labels);

/// Per-model accuracy report, overall and per stratum. Deterministic.
nlohmann::json score(const std::vector<Trial> &trials, const BenchmarkManifest &manifest,
                     const ScoreOptions &options = {});

struct ModelVotes {
  std::string name;
  double accuracy = 0.0;
  std::map<std::string, std::optional<char>> answers; // by pair_id
};

/// Weighted vote for one item. Returns nullopt when nobody voted. Letter sums
/// within a relative 1e-9 of the best are tied and the earliest letter wins.
std::optional<char> weighted_vote(const std::vector<std::optional<char>> &votes, const std::vector<double> &weights);

struct EnsembleResult {
  std::vector<double> weights; // aligned with the models
  std::map<std::string, std::optional<char>> letters;
  double accuracy = 0.0;
};

/// Weights are accuracy / baseline accuracy. Throws Error when the baseline
/// is unknown or has zero accuracy.
EnsembleResult ensemble(const std::vector<ModelVotes> &models, const std::string &baseline,
                        const BenchmarkManifest &manifest);

ModelVotes model_votes(const std::vector<Trial> &trials, const std::string &model, const BenchmarkManifest &manifest);

/// Pair IDs answered incorrectly (first non-duplicate trial per item).
std::set<std::string> wrong_set(const std::vector<Trial> &trials, const std::string &model);

double wrong_set_iou(const std::set<std::string> &wa, const std::set<std::string> &wb);

/// Over the common wrong items, the fraction where both gave the same letter
/// (a parse failure never matches). Absent when there are no common items.
std::optional<double> same_wrong_fraction(const std::vector<Trial> &trials, const std::string &model_a,
                                          const std::string &model_b);

std::optional<double> human_also_wrong_fraction(const std::set<std::string> &human_wrong,
                                                const std::set<std::string> &model_wrong);

/// Items where the mean correctness over all "human:*" trials is below 0.5.
std::set<std::string> human_wrong_set(const std::vector<Trial> &trials);

/// Per-item mean correctness across all "human:*" trials.
std::map<std::string, double> human_item_accuracy(const std::vector<Trial> &trials);

class CapabilityError : public Error {
public:
  using Error::Error;
};

extern const char *const kVqaCaptionPrompt;
std::string vqa_question(const std::string &caption);

/// Probability mass on "Yes" among the first-token alternatives. Throws
/// CapabilityError when the endpoint returned no token probabilities.
double yes_probability(const ChatResult &result, const std::string &judge_name);

struct VqaItem {
  std::string pair_id;
  std::string caption;
  double yes_consistent = 0.0;
  double yes_edited = 0.0;
};

struct VqaSummary {
  std::size_t n = 0;
  double pairwise_acc = 0.0;
  std::optional<double> pearson_r;
  std::optional<double> kendall_tau;
};

/// Pairwise accuracy over all items (ties count half); correlations between
/// edited-pair scores and human accuracy over items that have both.
VqaSummary summarize_vqa(const std::vector<VqaItem> &items, const std::map<std::string, double> &human_accuracy);

/// Scores (V1, V2) and (V1, V2') per item with a caption from V1 alone.
/// Reads view1_clean.png and view2_orig.png next to each item's images.
std::vector<VqaItem> run_vqascore(const BenchmarkManifest &manifest, const std::filesystem::path &base_dir,
                                  const ChatClient &captioner, const ChatClient &judge);

nlohmann::json to_json(const VqaItem &item);
nlohmann::json to_json(const VqaSummary &s);

} // namespace forge
