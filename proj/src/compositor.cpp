#include "forge/compositor.hpp"

#include "forge/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace forge {
namespace {

constexpr std::uint64_t kExtraStream = 0x6578747261;

struct Named {
  Variant v;
  const char *name;
};
constexpr Named kVariants[] = {
    {Variant::kInconsistent, "inconsistent"},   {Variant::kSelfPaste, "self_paste"},
    {Variant::kNoChange, "no_change"},          {Variant::kMultiSelfPaste, "multi_self_paste"},
    {Variant::kExpansionSweep, "expansion_sweep"},
};

Rect tight_bbox(const InstanceMap &instances, InstanceId id) {
  int x0 = instances.width(), y0 = instances.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < instances.height(); ++y) {
    for (int x = 0; x < instances.width(); ++x) {
      if (instances.at(x, y) == id) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
    }
  }
  if (x1 < 0) {
    return {};
  }
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

EraseResult erase_in(const RgbImage &rgb, const InstanceMap &instances, InstanceId object_id, double expansion,
                     const InpaintBackend &backend) {
  const Rect bbox = tight_bbox(instances, object_id);
  if (bbox.empty()) {
    throw Error("object " + std::to_string(object_id) + " is not present in the edited view");
  }
  const Rect box = expand_box(bbox, expansion, rgb.width(), rgb.height());
  PixelMask region = PixelMask::from_rect(rgb.width(), rgb.height(), box);
  return {inpaint(rgb, region, backend), std::move(region)};
}

// erase -> paste -> restore for one object.
RgbImage edit_object(const RgbImage &current, const ViewFrame &v2, const ViewFrame &source, InstanceId object_id,
                     double expansion, InpaintBackend backend, std::uint64_t seed, PixelMask &region_union,
                     std::optional<PasteTransform> *transform, EditTimings *timings) {
  using Clock = std::chrono::steady_clock;
  backend.params.rng_seed = derive_seed(seed, object_id);
  const auto t0 = Clock::now();
  EraseResult erased = erase_in(current, v2.instances, object_id, expansion, backend);
  const auto t1 = Clock::now();
  const Rect target = tight_bbox(v2.instances, object_id);
  PasteResult pasted = paste_object(erased.raster, source, object_id, target);
  if (transform != nullptr) {
    *transform = pasted.transform;
  }
  RgbImage out = restore_occluders(pasted.raster, v2, object_id, erased.region);
  region_union = region_union.united(erased.region);
  if (timings != nullptr) {
    timings->inpaint_s += std::chrono::duration<double>(t1 - t0).count();
    timings->paste_s += std::chrono::duration<double>(Clock::now() - t1).count();
  }
  return out;
}

} // namespace

const char *to_string(Variant v) {
  for (const auto &n : kVariants) {
    if (n.v == v) {
      return n.name;
    }
  }
  return "?";
}

Variant variant_from_string(const std::string &s) {
  for (const auto &n : kVariants) {
    if (s == n.name) {
      return n.v;
    }
  }
  throw std::invalid_argument("unknown variant: " + s);
}

void EditRecipe::validate() const {
  if (!(expansion >= 0.0)) {
    throw std::invalid_argument("expansion must be >= 0");
  }
  if (extra_objects && *extra_objects < 1) {
    throw std::invalid_argument("multi_self_paste count must be >= 1");
  }
  backend.params.validate();
}

nlohmann::json to_json(const EditRecipe &recipe) {
  nlohmann::json j = {
      {"scene_id", recipe.candidate.scene_id},
      {"v1_id", recipe.candidate.v1_id},
      {"v2_id", recipe.candidate.v2_id},
      {"v3_id", recipe.candidate.v3_id},
      {"object_id", recipe.candidate.object_id},
      {"variant", to_string(recipe.variant)},
      {"expansion", recipe.expansion},
      {"inpaint_backend", recipe.backend.kind == InpaintBackend::Kind::kNative ? "native" : "remote"},
      {"rng_seed", recipe.rng_seed},
  };
  if (recipe.variant == Variant::kMultiSelfPaste) {
    j["extra_objects"] = recipe.extra_objects ? nlohmann::json(*recipe.extra_objects) : nlohmann::json("all");
  }
  return j;
}

nlohmann::json to_json(const PasteTransform &t) {
  auto rect = [](const Rect &r) { return nlohmann::json{r.x, r.y, r.w, r.h}; };
  return {{"scale", t.scale},
          {"source_box", rect(t.source_box)},
          {"target_box", rect(t.target_box)},
          {"placed_box", rect(t.placed_box)},
          {"dst_center", {t.dst_center.x, t.dst_center.y}}};
}

Rect expand_box(const Rect &bbox, double expansion, int width, int height) {
  const int w = round_half_up(bbox.w * (1.0 + 2.0 * expansion));
  const int h = round_half_up(bbox.h * (1.0 + 2.0 * expansion));
  const int x0 = round_half_up(bbox.x + bbox.w / 2.0 - w / 2.0);
  const int y0 = round_half_up(bbox.y + bbox.h / 2.0 - h / 2.0);
  const Rect clamped = Rect{x0, y0, w, h}.intersect(Rect{0, 0, width, height});
  if (clamped.empty()) {
    throw Error("expanded box has zero area");
  }
  return clamped;
}

EraseResult erase_object(const ViewFrame &v2, InstanceId object_id, double expansion, const InpaintBackend &backend) {
  return erase_in(v2.rgb, v2.instances, object_id, expansion, backend);
}

PasteTransform fit_transform(const Rect &source_box, const Rect &target_box) {
  PasteTransform t;
  t.source_box = source_box;
  t.target_box = target_box;
  t.scale = std::min(static_cast<double>(target_box.w) / source_box.w, static_cast<double>(target_box.h) / source_box.h);
  const int ew = std::max(1, round_half_up(source_box.w * t.scale));
  const int eh = std::max(1, round_half_up(source_box.h * t.scale));
  const double cx = target_box.x + target_box.w / 2.0;
  const double cy = target_box.y + target_box.h / 2.0;
  t.placed_box = {round_half_up(cx - ew / 2.0), round_half_up(cy - eh / 2.0), ew, eh};
  t.dst_center = {round_half_up(cx), round_half_up(cy)};
  return t;
}

PasteResult paste_object(const RgbImage &base, const ViewFrame &source, InstanceId object_id, const Rect &target_box) {
  const Rect src = tight_bbox(source.instances, object_id);
  if (src.empty()) {
    throw Error("object " + std::to_string(object_id) + " has an empty mask in source view " + source.frame_id);
  }
  if (target_box.empty()) {
    throw Error("paste target box is empty");
  }
  PasteResult out{base, PixelMask(base.width(), base.height()), fit_transform(src, target_box)};
  const Rect &p = out.transform.placed_box;
  for (int j = 0; j < p.h; ++j) {
    const int y = p.y + j;
    if (y < 0 || y >= base.height()) {
      continue;
    }
    const int sy = src.y + static_cast<int>((2LL * j + 1) * src.h / (2LL * p.h));
    for (int i = 0; i < p.w; ++i) {
      const int x = p.x + i;
      if (x < 0 || x >= base.width()) {
        continue;
      }
      const int sx = src.x + static_cast<int>((2LL * i + 1) * src.w / (2LL * p.w));
      if (source.instances.at(sx, sy) != object_id) {
        continue;
      }
      for (int k = 0; k < 3; ++k) {
        out.raster.at(x, y, k) = source.rgb.at(sx, sy, k);
      }
      out.pasted.set(x, y);
    }
  }
  return out;
}

RgbImage restore_occluders(const RgbImage &composited, const ViewFrame &v2, InstanceId edited_object,
                           const PixelMask &region) {
  RgbImage out = composited;
  const Rect box = region.bbox();
  for (int y = box.y; y < box.bottom(); ++y) {
    for (int x = box.x; x < box.right(); ++x) {
      const InstanceId id = v2.instances.at(x, y);
      if (id != 0 && id != edited_object && region.test(x, y)) {
        for (int k = 0; k < 3; ++k) {
          out.at(x, y, k) = v2.rgb.at(x, y, k);
        }
      }
    }
  }
  return out;
}

std::string make_pair_id(const EditRecipe &recipe) {
  const TripletCandidate &c = recipe.candidate;
  std::string id = c.scene_id + "_" + c.v1_id + "_" + c.v2_id + "_" + c.v3_id + "_o" + std::to_string(c.object_id) + "_" +
                   to_string(recipe.variant);
  if (recipe.variant == Variant::kExpansionSweep) {
    id += "_e" + std::to_string(static_cast<int>(std::lround(recipe.expansion * 100.0)));
  }
  if (recipe.variant == Variant::kMultiSelfPaste) {
    id += "_k" + (recipe.extra_objects ? std::to_string(*recipe.extra_objects) : std::string("all"));
  }
  return id;
}

std::vector<InstanceId> extra_paste_order(const SceneBundle &bundle, const EditRecipe &recipe,
                                          const LabelingConfig &labeling) {
  const ViewFrame &v1 = bundle.frame(recipe.candidate.v1_id);
  const ViewFrame &v2 = bundle.frame(recipe.candidate.v2_id);
  const auto in_v2 = instance_stats(v2);
  std::vector<InstanceId> pool;
  for (const InstanceId id : select_labelable(v1.instances, recipe.candidate.object_id, labeling)) {
    if (id != recipe.candidate.object_id && in_v2.count(id) != 0) {
      pool.push_back(id);
    }
  }
  std::sort(pool.begin(), pool.end());
  Rng rng(derive_seed(recipe.rng_seed, kExtraStream));
  rng.shuffle(std::span(pool));
  if (recipe.extra_objects && static_cast<std::size_t>(*recipe.extra_objects) < pool.size()) {
    pool.resize(static_cast<std::size_t>(*recipe.extra_objects));
  }
  return pool;
}

EditedPair make_pair(const SceneBundle &bundle, const EditRecipe &recipe, const LabelingConfig &labeling,
                     EditTimings *timings) {
  recipe.validate();
  const TripletCandidate &c = recipe.candidate;
  const ViewFrame &v1 = bundle.frame(c.v1_id);
  const ViewFrame &v2 = bundle.frame(c.v2_id);
  const ViewFrame &v3 = bundle.frame(c.v3_id);

  EditedPair pair;
  pair.pair_id = make_pair_id(recipe);
  pair.view1 = v1.rgb;
  pair.answer_object = c.object_id;
  pair.inpaint_region = PixelMask(v2.width(), v2.height());
  pair.recipe = recipe;

  switch (recipe.variant) {
  case Variant::kNoChange:
    pair.view2_edited = v2.rgb;
    break;
  case Variant::kSelfPaste:
    pair.view2_edited = edit_object(v2.rgb, v2, v2, c.object_id, recipe.expansion, recipe.backend, recipe.rng_seed,
                                    pair.inpaint_region, &pair.paste_transform, timings);
    break;
  case Variant::kInconsistent:
  case Variant::kExpansionSweep:
    pair.view2_edited = edit_object(v2.rgb, v2, v3, c.object_id, recipe.expansion, recipe.backend, recipe.rng_seed,
                                    pair.inpaint_region, &pair.paste_transform, timings);
    break;
  case Variant::kMultiSelfPaste: {
    pair.extra_objects = extra_paste_order(bundle, recipe, labeling);
    RgbImage current = v2.rgb;
    for (const InstanceId id : pair.extra_objects) {
      current = edit_object(current, v2, v2, id, recipe.expansion, recipe.backend, recipe.rng_seed, pair.inpaint_region,
                            nullptr, timings);
    }
    pair.view2_edited = edit_object(current, v2, v3, c.object_id, recipe.expansion, recipe.backend, recipe.rng_seed,
                                    pair.inpaint_region, &pair.paste_transform, timings);
    break;
  }
  }
  return pair;
}

} // namespace forge
