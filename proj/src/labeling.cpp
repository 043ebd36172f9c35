#include "forge/labeling.hpp"

#include "forge/bitmap_font.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace forge {

ScaledThresholds scaled_thresholds(int width, int height, const LabelingConfig &cfg) {
  const double scale = static_cast<double>(width) * height / (1024.0 * 768.0);
  return {cfg.base_threshold_px * scale, cfg.floor_px * scale};
}

std::vector<InstanceId> select_by_area(const std::map<InstanceId, long long> &areas, InstanceId answer,
                                       const ScaledThresholds &thresholds, const LabelingConfig &cfg) {
  const auto it = areas.find(answer);
  if (it == areas.end() || it->second <= 0) {
    throw UnlabelableError("answer object " + std::to_string(answer) + " is not visible in the labeled view");
  }
  if (static_cast<double>(it->second) < thresholds.floor) {
    throw UnlabelableError("answer object " + std::to_string(answer) + " covers " + std::to_string(it->second) +
                           " px, below the labeling floor");
  }
  auto qualifying = [&](double thr) {
    std::vector<InstanceId> ids;
    for (const auto &[id, area] : areas) {
      if (area > 0 && static_cast<double>(area) >= thr) {
        ids.push_back(id);
      }
    }
    return ids;
  };
  double thr = std::max(thresholds.threshold, thresholds.floor);
  std::vector<InstanceId> ids = qualifying(thr);
  while (static_cast<int>(ids.size()) < cfg.min_labels && thr > thresholds.floor) {
    thr = std::max(thr / 2.0, thresholds.floor);
    ids = qualifying(thr);
  }
  if (std::find(ids.begin(), ids.end(), answer) == ids.end()) {
    ids.push_back(answer);
  }
  std::sort(ids.begin(), ids.end(), [&](InstanceId a, InstanceId b) {
    const long long aa = areas.at(a), ab = areas.at(b);
    return aa != ab ? aa > ab : a < b;
  });
  const auto cap = static_cast<std::size_t>(std::max(1, cfg.max_labels));
  if (ids.size() > cap) {
    const bool answer_kept = std::find(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(cap), answer) !=
                             ids.begin() + static_cast<std::ptrdiff_t>(cap);
    if (answer_kept) {
      ids.resize(cap);
    } else {
      ids.resize(cap - 1);
      // The answer is smaller than everything kept, so appending keeps the order.
      ids.push_back(answer);
    }
  }
  return ids;
}

std::vector<InstanceId> select_labelable(const InstanceMap &instances, InstanceId answer, const LabelingConfig &cfg) {
  std::map<InstanceId, long long> areas;
  for (const auto &[id, stat] : instance_stats(instances)) {
    areas[id] = stat.area_px;
  }
  return select_by_area(areas, answer, scaled_thresholds(instances.width(), instances.height(), cfg), cfg);
}

LabelAssignment assign_letters(const InstanceMap &instances, const std::vector<InstanceId> &objects,
                               InstanceId answer) {
  struct Acc {
    double sx = 0.0;
    double sy = 0.0;
    long long n = 0;
  };
  std::map<InstanceId, Acc> acc;
  for (const InstanceId id : objects) {
    acc[id];
  }
  for (int y = 0; y < instances.height(); ++y) {
    for (int x = 0; x < instances.width(); ++x) {
      const auto it = acc.find(instances.at(x, y));
      if (it != acc.end()) {
        it->second.sx += x;
        it->second.sy += y;
        ++it->second.n;
      }
    }
  }
  std::vector<LabelEntry> entries;
  for (const InstanceId id : objects) {
    const Acc &a = acc.at(id);
    LabelEntry e;
    e.object_id = id;
    e.area_px = a.n;
    if (a.n > 0) {
      e.anchor = {static_cast<int>(std::floor(a.sx / static_cast<double>(a.n) + 0.5)),
                  static_cast<int>(std::floor(a.sy / static_cast<double>(a.n) + 0.5))};
    }
    entries.push_back(e);
  }
  std::sort(entries.begin(), entries.end(), [](const LabelEntry &a, const LabelEntry &b) {
    return std::tie(a.anchor.y, a.anchor.x, a.object_id) < std::tie(b.anchor.y, b.anchor.x, b.object_id);
  });
  LabelAssignment out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    entries[i].letter = static_cast<char>('A' + i);
    if (entries[i].object_id == answer) {
      out.answer_letter = entries[i].letter;
    }
  }
  out.entries = std::move(entries);
  return out;
}

int glyph_scale(int image_height, const LabelStyle &style) {
  const int glyph_px = std::max(8, static_cast<int>(std::lround(style.glyph_height * image_height)));
  return std::max(1, (glyph_px + font::kGlyphHeight - 1) / font::kGlyphHeight);
}

std::vector<TagPlacement> layout_tags(int width, int height, const LabelAssignment &assignment,
                                      const LabelStyle &style) {
  const int s = glyph_scale(height, style);
  const int tw = (font::kGlyphWidth + 2) * s;
  const int th = (font::kGlyphHeight + 2) * s;
  std::vector<TagPlacement> placed;
  auto collides = [&](const Rect &r) {
    return std::any_of(placed.begin(), placed.end(), [&](const TagPlacement &p) { return p.box.intersects(r); });
  };
  for (const LabelEntry &e : assignment.entries) {
    const int x = std::clamp(e.anchor.x - tw / 2, 0, std::max(0, width - tw));
    const int y0 = std::clamp(e.anchor.y - th / 2, 0, std::max(0, height - th));
    Rect box{x, y0, tw, th};
    if (collides(box)) {
      bool found = false;
      for (int y = y0 + th; y + th <= height && !found; y += th) {
        if (!collides({x, y, tw, th})) {
          box.y = y;
          found = true;
        }
      }
      for (int y = y0 - th; y >= 0 && !found; y -= th) {
        if (!collides({x, y, tw, th})) {
          box.y = y;
          found = true;
        }
      }
    }
    placed.push_back({e.letter, box});
  }
  return placed;
}

RgbImage render_labels(const RgbImage &image, const LabelAssignment &assignment, const LabelStyle &style) {
  RgbImage out = image;
  const int s = glyph_scale(image.height(), style);
  for (const TagPlacement &tag : layout_tags(image.width(), image.height(), assignment, style)) {
    for (int dy = 0; dy < tag.box.h; ++dy) {
      const int y = tag.box.y + dy;
      if (y < 0 || y >= image.height()) {
        continue;
      }
      for (int dx = 0; dx < tag.box.w; ++dx) {
        const int x = tag.box.x + dx;
        if (x < 0 || x >= image.width()) {
          continue;
        }
        const int col = dx / s - 1;
        const int row = dy / s - 1;
        const bool ink = col >= 0 && row >= 0 && col < font::kGlyphWidth && row < font::kGlyphHeight &&
                         font::glyph_bit(tag.letter, col, row);
        const Rgb &c = ink ? style.fill : style.outline;
        for (int k = 0; k < 3; ++k) {
          out.at(x, y, k) = c[static_cast<std::size_t>(k)];
        }
      }
    }
  }
  return out;
}

AnswerKey make_answer_key(const std::string &pair_id, const LabelAssignment &assignment,
                          const std::map<InstanceId, InstanceInfo> &instance_table) {
  AnswerKey key;
  key.pair_id = pair_id;
  key.answer_letter = assignment.answer_letter;
  for (const LabelEntry &e : assignment.entries) {
    const auto it = instance_table.find(e.object_id);
    key.letters.push_back({e.letter, e.object_id, it == instance_table.end() ? std::string() : it->second.category});
  }
  return key;
}

nlohmann::json to_json(const AnswerKey &key) {
  nlohmann::json letters = nlohmann::json::array();
  for (const auto &l : key.letters) {
    letters.push_back({{"letter", std::string(1, l.letter)}, {"object_id", l.object_id}, {"category", l.category}});
  }
  return {{"pair_id", key.pair_id},
          {"answer_letter", std::string(1, key.answer_letter)},
          {"letters", letters},
          {"num_labels", key.num_labels()}};
}

AnswerKey answer_key_from_json(const nlohmann::json &j) {
  AnswerKey key;
  key.pair_id = j.at("pair_id").get<std::string>();
  key.answer_letter = j.at("answer_letter").get<std::string>().at(0);
  for (const auto &l : j.at("letters")) {
    key.letters.push_back(
        {l.at("letter").get<std::string>().at(0), l.at("object_id").get<InstanceId>(), l.value("category", "")});
  }
  if (j.contains("num_labels") && j.at("num_labels").get<int>() != key.num_labels()) {
    throw Error("answer key " + key.pair_id + ": num_labels disagrees with letters");
  }
  return key;
}

} // namespace forge
