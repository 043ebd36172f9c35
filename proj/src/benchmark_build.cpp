#include "forge/benchmark_build.hpp"

#include "forge/geometry.hpp"
#include "forge/jsonl.hpp"
#include "forge/statistics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

namespace forge {

const char *const kDepthBins[3] = {"close", "medium", "far"};
const char *const kLightBins[3] = {"dark", "medium", "bright"};

const char *const kCaptionPrompt =
    "Describe the indoor scene shown in these two photos in one sentence. Name the kind of room or space.";
const char *const kCategoryPrompt =
    "Below are numbered scene descriptions. Assign each one a short scene category such as kitchen, bedroom, "
    "office or bathroom, reusing the same category for similar scenes. Reply with only a JSON array of strings, "
    "one category per description, in the same order.";

double object_depth(const ViewFrame &v1, InstanceId object_id) {
  std::vector<double> depths;
  for (int y = 0; y < v1.height(); ++y) {
    for (int x = 0; x < v1.width(); ++x) {
      if (v1.instances.at(x, y) == object_id) {
        const float d = v1.depth.at(x, y);
        if (std::isfinite(d) && d > 0.0f) {
          depths.push_back(d);
        }
      }
    }
  }
  if (depths.empty()) {
    throw Error("object " + std::to_string(object_id) + " has no valid depth in frame " + v1.frame_id);
  }
  return stats::median(std::move(depths));
}

double pair_brightness(const RgbImage &v1, const RgbImage &v2) {
  auto sum = [](const RgbImage &img) {
    double s = 0.0;
    const auto &d = img.storage();
    for (std::size_t i = 0; i < d.size(); i += 3) {
      s += 0.2126 * d[i] + 0.7152 * d[i + 1] + 0.0722 * d[i + 2];
    }
    return s;
  };
  const double n = static_cast<double>(v1.pixel_count() + v2.pixel_count());
  return n == 0.0 ? 0.0 : (sum(v1) + sum(v2)) / n;
}

bool is_plausible(double roll_deg, bool degenerate) { return degenerate || std::fabs(roll_deg) < kPlausibleRollDeg; }

Plausibility plausibility(const CameraModel &v2_cam, const CameraModel &v3_cam) {
  const RollEstimate r = camera_roll(v2_cam, v3_cam);
  Plausibility p;
  p.roll_deg = r.degenerate ? 0.0 : r.degrees;
  p.degenerate = r.degenerate;
  p.plausible = is_plausible(p.roll_deg, p.degenerate);
  return p;
}

PairMeta pair_meta_from_json(const nlohmann::json &j) {
  PairMeta m;
  m.pair_id = j.at("pair_id").get<std::string>();
  m.scene_id = j.at("scene_id").get<std::string>();
  m.variant = j.at("variant").get<std::string>();
  m.expansion = j.at("expansion").get<double>();
  m.answer_object = j.at("answer_object").get<InstanceId>();
  m.object_category = j.at("object_category").get<std::string>();
  m.depth_m = j.at("depth_m").get<double>();
  m.brightness = j.at("brightness").get<double>();
  m.roll_deg = j.at("roll_deg").get<double>();
  m.roll_degenerate = j.value("roll_degenerate", false);
  m.scene_category = j.value("scene_category", "uncategorized");
  m.provenance = j.value("provenance", nlohmann::json::object());
  return m;
}

nlohmann::json to_json(const PairMeta &m) {
  return {{"pair_id", m.pair_id},
          {"scene_id", m.scene_id},
          {"variant", m.variant},
          {"expansion", m.expansion},
          {"answer_object", m.answer_object},
          {"object_category", m.object_category},
          {"depth_m", m.depth_m},
          {"brightness", m.brightness},
          {"roll_deg", m.roll_deg},
          {"roll_degenerate", m.roll_degenerate},
          {"scene_category", m.scene_category},
          {"provenance", m.provenance}};
}

std::string BenchmarkItem::valid_letters() const {
  std::string s;
  for (int i = 0; i < num_labels && i < 26; ++i) {
    s.push_back(static_cast<char>('A' + i));
  }
  return s;
}

const BenchmarkItem *BenchmarkManifest::find(const std::string &pair_id) const {
  const auto it = std::lower_bound(items.begin(), items.end(), pair_id,
                                   [](const BenchmarkItem &item, const std::string &id) { return item.pair_id < id; });
  return it != items.end() && it->pair_id == pair_id ? &*it : nullptr;
}

BenchmarkManifest build_manifest(const std::vector<ManifestInput> &pairs, const std::vector<AnswerKey> &keys,
                                 const nlohmann::json &config, bool allow_partial) {
  std::map<std::string, const AnswerKey *> by_id;
  for (const AnswerKey &k : keys) {
    by_id[k.pair_id] = &k;
  }
  std::vector<std::string> missing;
  std::set<std::string> seen;
  BenchmarkManifest m;
  m.config = config;
  for (const ManifestInput &p : pairs) {
    seen.insert(p.meta.pair_id);
    const auto it = by_id.find(p.meta.pair_id);
    if (it == by_id.end()) {
      missing.push_back(p.meta.pair_id + ": no answer key");
      continue;
    }
    const AnswerKey &key = *it->second;
    BenchmarkItem item;
    item.pair_id = p.meta.pair_id;
    item.scene_id = p.meta.scene_id;
    item.view1 = p.view1;
    item.view2 = p.view2;
    item.answer_letter = key.answer_letter;
    item.num_labels = key.num_labels();
    item.depth_m = p.meta.depth_m;
    item.brightness = p.meta.brightness;
    item.roll_deg = p.meta.roll_deg;
    item.roll_degenerate = p.meta.roll_degenerate;
    item.plausible = is_plausible(item.roll_deg, item.roll_degenerate);
    item.object_category = p.meta.object_category;
    item.scene_category = p.meta.scene_category;
    item.variant = p.meta.variant;
    item.expansion = p.meta.expansion;
    item.provenance = p.meta.provenance;
    if (!std::isfinite(item.depth_m) || !std::isfinite(item.brightness) || item.num_labels < 1) {
      missing.push_back(item.pair_id + ": incomplete metadata");
      continue;
    }
    m.items.push_back(std::move(item));
  }
  for (const AnswerKey &k : keys) {
    if (seen.count(k.pair_id) == 0) {
      missing.push_back(k.pair_id + ": answer key without pair metadata");
    }
  }
  if (!missing.empty() && !allow_partial) {
    throw ManifestError(std::to_string(missing.size()) + " pair(s) lack metadata; first: " + missing.front(), missing);
  }
  std::sort(m.items.begin(), m.items.end(), [](const BenchmarkItem &a, const BenchmarkItem &b) { return a.pair_id < b.pair_id; });
  for (std::size_t i = 1; i < m.items.size(); ++i) {
    if (m.items[i].pair_id == m.items[i - 1].pair_id) {
      throw ManifestError("duplicate pair_id " + m.items[i].pair_id, {m.items[i].pair_id});
    }
  }
  rebin(m);
  return m;
}

void rebin(BenchmarkManifest &manifest) {
  std::vector<double> depth, light;
  for (const auto &item : manifest.items) {
    depth.push_back(item.depth_m);
    light.push_back(item.brightness);
  }
  const stats::Tertiles d = stats::tertile_bins(depth);
  const stats::Tertiles l = stats::tertile_bins(light);
  manifest.edges.depth[0] = d.edge1;
  manifest.edges.depth[1] = d.edge2;
  manifest.edges.light[0] = l.edge1;
  manifest.edges.light[1] = l.edge2;
  for (std::size_t i = 0; i < manifest.items.size(); ++i) {
    manifest.items[i].depth_bin = kDepthBins[d.bins[i]];
    manifest.items[i].light_bin = kLightBins[l.bins[i]];
  }
}

bool manifest_consistent(const BenchmarkManifest &manifest) {
  auto index_of = [](const char *const names[3], const std::string &s) {
    for (int i = 0; i < 3; ++i) {
      if (s == names[i]) {
        return i;
      }
    }
    return -1;
  };
  std::vector<double> depth, light;
  std::vector<int> dbins, lbins;
  int dpop[3] = {0, 0, 0}, lpop[3] = {0, 0, 0};
  for (const auto &item : manifest.items) {
    depth.push_back(item.depth_m);
    light.push_back(item.brightness);
    dbins.push_back(index_of(kDepthBins, item.depth_bin));
    lbins.push_back(index_of(kLightBins, item.light_bin));
    if (dbins.back() < 0 || lbins.back() < 0) {
      return false;
    }
    ++dpop[dbins.back()];
    ++lpop[lbins.back()];
    if (item.plausible != is_plausible(item.roll_deg, item.roll_degenerate)) {
      return false;
    }
  }
  auto balanced = [](const int p[3]) { return *std::max_element(p, p + 3) - *std::min_element(p, p + 3) <= 2; };
  if (depth.size() < 3) {
    return false;
  }
  const stats::Tertiles d = stats::tertile_bins(depth);
  const stats::Tertiles l = stats::tertile_bins(light);
  return balanced(dpop) && balanced(lpop) && d.edge1 == manifest.edges.depth[0] && d.edge2 == manifest.edges.depth[1] &&
         l.edge1 == manifest.edges.light[0] && l.edge2 == manifest.edges.light[1] &&
         stats::bins_consistent(depth, dbins, manifest.edges.depth[0], manifest.edges.depth[1]) &&
         stats::bins_consistent(light, lbins, manifest.edges.light[0], manifest.edges.light[1]);
}

double expected_random_accuracy(const BenchmarkManifest &manifest) {
  if (manifest.items.empty()) {
    throw Error("expected_random_accuracy: empty manifest");
  }
  double s = 0.0;
  for (const auto &item : manifest.items) {
    if (item.num_labels < 1) {
      throw Error("item " + item.pair_id + " has no labels");
    }
    s += 1.0 / item.num_labels;
  }
  return s / static_cast<double>(manifest.items.size());
}

nlohmann::json to_json(const BenchmarkItem &item) {
  return {{"record", "item"},
          {"pair_id", item.pair_id},
          {"scene_id", item.scene_id},
          {"view1", item.view1},
          {"view2", item.view2},
          {"answer_letter", std::string(1, item.answer_letter)},
          {"num_labels", item.num_labels},
          {"depth_m", item.depth_m},
          {"depth_bin", item.depth_bin},
          {"brightness", item.brightness},
          {"light_bin", item.light_bin},
          {"plausibility", item.plausible ? "plausible" : "implausible"},
          {"roll_deg", item.roll_deg},
          {"roll_degenerate", item.roll_degenerate},
          {"object_category", item.object_category},
          {"scene_category", item.scene_category},
          {"variant", item.variant},
          {"expansion", item.expansion},
          {"provenance", item.provenance}};
}

BenchmarkItem benchmark_item_from_json(const nlohmann::json &j) {
  BenchmarkItem item;
  item.pair_id = j.at("pair_id").get<std::string>();
  item.scene_id = j.at("scene_id").get<std::string>();
  item.view1 = j.at("view1").get<std::string>();
  item.view2 = j.at("view2").get<std::string>();
  item.answer_letter = j.at("answer_letter").get<std::string>().at(0);
  item.num_labels = j.at("num_labels").get<int>();
  item.depth_m = j.at("depth_m").get<double>();
  item.depth_bin = j.at("depth_bin").get<std::string>();
  item.brightness = j.at("brightness").get<double>();
  item.light_bin = j.at("light_bin").get<std::string>();
  item.plausible = j.at("plausibility").get<std::string>() == "plausible";
  item.roll_deg = j.at("roll_deg").get<double>();
  item.roll_degenerate = j.value("roll_degenerate", false);
  item.object_category = j.at("object_category").get<std::string>();
  item.scene_category = j.value("scene_category", "uncategorized");
  item.variant = j.at("variant").get<std::string>();
  item.expansion = j.at("expansion").get<double>();
  item.provenance = j.value("provenance", nlohmann::json::object());
  return item;
}

std::vector<nlohmann::json> manifest_records(const BenchmarkManifest &manifest) {
  std::vector<nlohmann::json> records;
  records.push_back({{"record", "header"},
                     {"format_version", manifest.format_version},
                     {"bin_edges",
                      {{"depth", {manifest.edges.depth[0], manifest.edges.depth[1]}},
                       {"light", {manifest.edges.light[0], manifest.edges.light[1]}}}},
                     {"num_items", manifest.items.size()},
                     {"config", manifest.config}});
  for (const auto &item : manifest.items) {
    records.push_back(to_json(item));
  }
  return records;
}

void write_manifest(const BenchmarkManifest &manifest, const std::filesystem::path &path) {
  write_jsonl(path, manifest_records(manifest));
}

BenchmarkManifest read_manifest(const std::filesystem::path &path) {
  const auto records = read_jsonl(path);
  if (records.empty() || records.front().value("record", "") != "header") {
    throw ManifestError(path.string() + ": missing header record", {});
  }
  const auto &h = records.front();
  BenchmarkManifest m;
  m.format_version = h.at("format_version").get<int>();
  if (m.format_version != kManifestFormatVersion) {
    throw ManifestError(path.string() + ": unsupported format_version " + std::to_string(m.format_version), {});
  }
  m.edges.depth[0] = h.at("bin_edges").at("depth").at(0).get<double>();
  m.edges.depth[1] = h.at("bin_edges").at("depth").at(1).get<double>();
  m.edges.light[0] = h.at("bin_edges").at("light").at(0).get<double>();
  m.edges.light[1] = h.at("bin_edges").at("light").at(1).get<double>();
  m.config = h.value("config", nlohmann::json::object());
  for (std::size_t i = 1; i < records.size(); ++i) {
    m.items.push_back(benchmark_item_from_json(records[i]));
  }
  return m;
}

std::string normalize_category(const std::string &label) {
  std::string out;
  bool pending_sep = false;
  for (const char raw : label) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isalnum(c) != 0) {
      if (pending_sep && !out.empty()) {
        out.push_back('_');
      }
      pending_sep = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      pending_sep = true;
    }
  }
  return out.empty() ? "misc" : out;
}

SceneCategorization categorize_scenes(const ChatClient &labeler, const std::vector<SceneCategoryInput> &pairs) {
  SceneCategorization out;
  out.model = labeler.endpoint().model;
  out.prompt_sha256 = sha256_hex(std::string(kCaptionPrompt) + "\n" + kCategoryPrompt);
  out.categories.assign(pairs.size(), "uncategorized");

  std::vector<std::string> captions(pairs.size());
  std::vector<std::size_t> captioned;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    try {
      const ChatResult r = labeler.complete({{"user", kCaptionPrompt, {pairs[i].view1_png, pairs[i].view2_png}}});
      captions[i] = r.text;
      captioned.push_back(i);
    } catch (const Error &e) {
      out.errors.push_back(pairs[i].pair_id + ": " + e.what());
    }
  }
  if (captioned.empty()) {
    return out;
  }
  std::string listing = kCategoryPrompt;
  listing += "\n";
  for (std::size_t k = 0; k < captioned.size(); ++k) {
    std::string caption = captions[captioned[k]];
    std::replace(caption.begin(), caption.end(), '\n', ' ');
    listing += "\n" + std::to_string(k + 1) + ". " + caption;
  }
  try {
    const ChatResult r = labeler.complete({{"user", listing, {}}});
    const auto lo = r.text.find('[');
    const auto hi = r.text.rfind(']');
    if (lo == std::string::npos || hi == std::string::npos || hi < lo) {
      throw Error("category reply holds no JSON array");
    }
    const auto arr = nlohmann::json::parse(r.text.substr(lo, hi - lo + 1));
    if (!arr.is_array() || arr.size() != captioned.size()) {
      throw Error("category reply has " + std::to_string(arr.size()) + " entries for " +
                  std::to_string(captioned.size()) + " captions");
    }
    for (std::size_t k = 0; k < captioned.size(); ++k) {
      out.categories[captioned[k]] = normalize_category(arr[k].is_string() ? arr[k].get<std::string>() : arr[k].dump());
    }
  } catch (const Error &e) {
    out.errors.push_back(std::string("batch categorization: ") + e.what());
  } catch (const nlohmann::json::exception &e) {
    out.errors.push_back(std::string("batch categorization: ") + e.what());
  }
  return out;
}

} // namespace forge
