#include "forge/triplet_select.hpp"

#include "forge/geometry.hpp"
#include "forge/rng.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <tuple>

namespace forge {
namespace {

using json = nlohmann::json;

struct FrameInfo {
  const ViewFrame *frame = nullptr;
  std::map<InstanceId, InstanceStat> stats;
  std::vector<InstanceId> visible; // >= visibility floor, ascending
};

long long area_of(const FrameInfo &f, InstanceId id) {
  const auto it = f.stats.find(id);
  return it == f.stats.end() ? 0 : it->second.area_px;
}

double set_iou(const std::vector<InstanceId> &a, const std::vector<InstanceId> &b) {
  std::vector<InstanceId> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  const std::size_t uni = a.size() + b.size() - common.size();
  return uni == 0 ? 0.0 : static_cast<double>(common.size()) / static_cast<double>(uni);
}

FrameInfo make_info(const ViewFrame &frame, long long floor_px) {
  FrameInfo info;
  info.frame = &frame;
  info.stats = instance_stats(frame);
  for (const auto &[id, st] : info.stats) {
    if (st.area_px >= floor_px) {
      info.visible.push_back(id);
    }
  }
  return info;
}

// The projected fraction only depends on (v3, v2, object); it is memoized
// across the many V1 choices that share it.
class ProjectionCache {
public:
  std::optional<double> get(const FrameInfo &v3, const FrameInfo &v2, InstanceId id) {
    if (area_of(v2, id) == 0) {
      return std::nullopt;
    }
    const auto key = std::make_tuple(v3.frame, v2.frame, id);
    {
      std::lock_guard lock(mutex_);
      if (const auto it = cache_.find(key); it != cache_.end()) {
        return it->second;
      }
    }
    const double value = projected_area_fraction(id, *v3.frame, *v2.frame);
    std::lock_guard lock(mutex_);
    cache_.emplace(key, value);
    return value;
  }

private:
  std::mutex mutex_;
  std::map<std::tuple<const ViewFrame *, const ViewFrame *, InstanceId>, double> cache_;
};

Verdict evaluate(const FrameInfo &v1, const FrameInfo &v2, const FrameInfo &v3, InstanceId id,
                 const SelectionConfig &cfg, ProjectionCache *cache) {
  Verdict verdict;
  Measurements &m = verdict.measured;
  m.area_v1 = area_of(v1, id);
  m.area_v2 = area_of(v2, id);
  m.area_v3 = area_of(v3, id);
  m.overlap_v1v2 = set_iou(v1.visible, v2.visible);
  m.overlap_v2v3 = set_iou(v2.visible, v3.visible);
  const double image_area = static_cast<double>(v2.frame->width()) * v2.frame->height();
  m.area_fraction_v2 = static_cast<double>(m.area_v2) / image_area;
  if (cache != nullptr) {
    m.projected_fraction = cache->get(v3, v2, id);
  } else if (m.area_v2 > 0) {
    m.projected_fraction = projected_area_fraction(id, *v3.frame, *v2.frame);
  }

  const long long floor_px = cfg.visibility_floor_px;
  if (m.area_v1 < floor_px || m.area_v2 < floor_px || m.area_v3 < floor_px) {
    verdict.failures.push_back(FailReason::kNotVisible);
  }
  if (m.overlap_v1v2 > cfg.overlap_max) {
    verdict.failures.push_back(FailReason::kOverlapV1V2);
  }
  if (m.overlap_v2v3 > cfg.overlap_max) {
    verdict.failures.push_back(FailReason::kOverlapV2V3);
  }
  if (m.area_fraction_v2 < cfg.area_min) {
    verdict.failures.push_back(FailReason::kAreaMin);
  }
  if (m.area_fraction_v2 > cfg.area_max) {
    verdict.failures.push_back(FailReason::kAreaMax);
  }
  if (!m.projected_fraction || *m.projected_fraction < cfg.proj_area_min) {
    verdict.failures.push_back(FailReason::kProjection);
  }
  return verdict;
}

const ViewFrame &require_frame(const SceneBundle &bundle, const std::string &id) {
  const ViewFrame *f = bundle.find_frame(id);
  if (f == nullptr) {
    throw SelectionError("unknown frame '" + id + "' in scene '" + bundle.scene_id + "'");
  }
  return *f;
}

} // namespace

void SelectionConfig::validate() const {
  if (!(area_min > 0.0 && area_min < area_max && area_max < 1.0)) {
    throw std::invalid_argument("selection config requires 0 < area_min < area_max < 1");
  }
  if (!(overlap_max >= 0.0 && overlap_max <= 1.0)) {
    throw std::invalid_argument("selection config requires 0 <= overlap_max <= 1");
  }
  if (!(proj_area_min > 0.0)) {
    throw std::invalid_argument("selection config requires proj_area_min > 0");
  }
  if (visibility_floor_px < 0) {
    throw std::invalid_argument("visibility_floor_px must be non-negative");
  }
}

SelectionConfig selection_config_from_json(const json &j) {
  SelectionConfig cfg;
  cfg.overlap_max = j.value("overlap_max", cfg.overlap_max);
  cfg.area_min = j.value("area_min", cfg.area_min);
  cfg.area_max = j.value("area_max", cfg.area_max);
  cfg.proj_area_min = j.value("proj_area_min", cfg.proj_area_min);
  cfg.visibility_floor_px = j.value("visibility_floor_px", cfg.visibility_floor_px);
  cfg.rng_seed = j.value("rng_seed", cfg.rng_seed);
  cfg.max_triples = j.value("max_triples", cfg.max_triples);
  cfg.workers = j.value("workers", cfg.workers);
  cfg.validate();
  return cfg;
}

json to_json(const SelectionConfig &cfg) {
  return json{{"overlap_max", cfg.overlap_max},         {"area_min", cfg.area_min},
              {"area_max", cfg.area_max},               {"proj_area_min", cfg.proj_area_min},
              {"visibility_floor_px", cfg.visibility_floor_px}, {"rng_seed", cfg.rng_seed},
              {"max_triples", cfg.max_triples},         {"overlap_definition", "iou_of_visible_id_sets"}};
}

const char *to_string(FailReason reason) {
  switch (reason) {
  case FailReason::kNotVisible:
    return "not_visible";
  case FailReason::kOverlapV1V2:
    return "overlap_v1v2";
  case FailReason::kOverlapV2V3:
    return "overlap_v2v3";
  case FailReason::kAreaMin:
    return "area_min";
  case FailReason::kAreaMax:
    return "area_max";
  case FailReason::kProjection:
    return "projection";
  }
  return "unknown";
}

FailReason fail_reason_from_string(const std::string &s) {
  for (const FailReason r : {FailReason::kNotVisible, FailReason::kOverlapV1V2, FailReason::kOverlapV2V3,
                             FailReason::kAreaMin, FailReason::kAreaMax, FailReason::kProjection}) {
    if (s == to_string(r)) {
      return r;
    }
  }
  throw std::invalid_argument("unknown fail reason '" + s + "'");
}

json to_json(const TripletCandidate &cand) {
  json j{{"scene_id", cand.scene_id},
         {"v1", cand.v1_id},
         {"v2", cand.v2_id},
         {"v3", cand.v3_id},
         {"object_id", cand.object_id}};
  if (cand.verdict) {
    const Verdict &v = *cand.verdict;
    j["pass"] = v.passed();
    json reasons = json::array();
    for (const FailReason r : v.failures) {
      reasons.push_back(to_string(r));
    }
    j["fail_reasons"] = reasons;
    const Measurements &m = v.measured;
    j["measured"] = json{{"area_v1", m.area_v1},
                         {"area_v2", m.area_v2},
                         {"area_v3", m.area_v3},
                         {"overlap_v1v2", m.overlap_v1v2},
                         {"overlap_v2v3", m.overlap_v2v3},
                         {"area_fraction_v2", m.area_fraction_v2},
                         {"projected_fraction", m.projected_fraction ? json(*m.projected_fraction) : json(nullptr)}};
  }
  return j;
}

TripletCandidate candidate_from_json(const json &j) {
  TripletCandidate c;
  c.scene_id = j.at("scene_id").get<std::string>();
  c.v1_id = j.at("v1").get<std::string>();
  c.v2_id = j.at("v2").get<std::string>();
  c.v3_id = j.at("v3").get<std::string>();
  c.object_id = j.at("object_id").get<InstanceId>();
  if (j.contains("fail_reasons")) {
    Verdict v;
    for (const auto &r : j.at("fail_reasons")) {
      v.failures.push_back(fail_reason_from_string(r.get<std::string>()));
    }
    if (j.contains("measured")) {
      const json &m = j.at("measured");
      v.measured.area_v1 = m.value("area_v1", 0LL);
      v.measured.area_v2 = m.value("area_v2", 0LL);
      v.measured.area_v3 = m.value("area_v3", 0LL);
      v.measured.overlap_v1v2 = m.value("overlap_v1v2", 0.0);
      v.measured.overlap_v2v3 = m.value("overlap_v2v3", 0.0);
      v.measured.area_fraction_v2 = m.value("area_fraction_v2", 0.0);
      if (m.contains("projected_fraction") && m.at("projected_fraction").is_number()) {
        v.measured.projected_fraction = m.at("projected_fraction").get<double>();
      }
    }
    c.verdict = v;
  }
  return c;
}

Verdict check_candidate(const SceneBundle &bundle, const TripletCandidate &cand, const SelectionConfig &cfg) {
  if (cand.v1_id == cand.v2_id || cand.v2_id == cand.v3_id || cand.v1_id == cand.v3_id) {
    throw SelectionError("candidate frame IDs must be distinct");
  }
  const ViewFrame &f1 = require_frame(bundle, cand.v1_id);
  const ViewFrame &f2 = require_frame(bundle, cand.v2_id);
  const ViewFrame &f3 = require_frame(bundle, cand.v3_id);
  if (!bundle.instance_table.contains(cand.object_id)) {
    throw SelectionError("unknown object " + std::to_string(cand.object_id) + " in scene '" + bundle.scene_id + "'");
  }
  const FrameInfo i1 = make_info(f1, cfg.visibility_floor_px);
  const FrameInfo i2 = make_info(f2, cfg.visibility_floor_px);
  const FrameInfo i3 = make_info(f3, cfg.visibility_floor_px);
  return evaluate(i1, i2, i3, cand.object_id, cfg, nullptr);
}

void enumerate_candidates(const SceneBundle &bundle, const SelectionConfig &cfg,
                          const std::function<bool(const TripletCandidate &)> &sink) {
  cfg.validate();
  std::vector<FrameInfo> infos;
  std::vector<std::size_t> order(bundle.frames.size());
  for (std::size_t i = 0; i < bundle.frames.size(); ++i) {
    infos.push_back(make_info(bundle.frames[i], cfg.visibility_floor_px));
    order[i] = i;
  }
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return bundle.frames[a].frame_id < bundle.frames[b].frame_id; });

  std::vector<std::array<std::size_t, 3>> triples;
  for (const std::size_t a : order) {
    for (const std::size_t b : order) {
      for (const std::size_t c : order) {
        if (a != b && b != c && a != c) {
          triples.push_back({a, b, c});
        }
      }
    }
  }
  Rng rng(derive_seed(cfg.rng_seed, 0x7472697000ULL));
  rng.shuffle(std::span(triples));
  if (triples.size() > cfg.max_triples) {
    triples.resize(cfg.max_triples);
  }

  struct Job {
    std::array<std::size_t, 3> triple;
    InstanceId id;
  };
  std::vector<Job> jobs;
  for (const auto &t : triples) {
    for (const auto &[id, st] : infos[t[0]].stats) {
      if (infos[t[1]].stats.contains(id) && infos[t[2]].stats.contains(id)) {
        jobs.push_back(Job{t, id});
      }
    }
  }

  ProjectionCache cache;
  const int workers = std::max(1, cfg.workers);
  const std::size_t chunk = workers == 1 ? 1 : 64 * static_cast<std::size_t>(workers);
  std::vector<Verdict> verdicts;
  for (std::size_t begin = 0; begin < jobs.size(); begin += chunk) {
    const std::size_t end = std::min(jobs.size(), begin + chunk);
    verdicts.assign(end - begin, Verdict{});
    auto run = [&](std::size_t k) {
      const Job &job = jobs[begin + k];
      verdicts[k] = evaluate(infos[job.triple[0]], infos[job.triple[1]], infos[job.triple[2]], job.id, cfg, &cache);
    };
    if (workers == 1) {
      for (std::size_t k = 0; k < end - begin; ++k) {
        run(k);
      }
    } else {
      std::vector<std::jthread> pool;
      for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          for (std::size_t k = static_cast<std::size_t>(w); k < end - begin; k += static_cast<std::size_t>(workers)) {
            run(k);
          }
        });
      }
    }
    for (std::size_t k = 0; k < end - begin; ++k) {
      const Job &job = jobs[begin + k];
      TripletCandidate cand;
      cand.scene_id = bundle.scene_id;
      cand.v1_id = bundle.frames[job.triple[0]].frame_id;
      cand.v2_id = bundle.frames[job.triple[1]].frame_id;
      cand.v3_id = bundle.frames[job.triple[2]].frame_id;
      cand.object_id = job.id;
      cand.verdict = std::move(verdicts[k]);
      if (!sink(cand)) {
        return;
      }
    }
  }
}

std::vector<TripletCandidate> enumerate_candidates(const SceneBundle &bundle, const SelectionConfig &cfg) {
  std::vector<TripletCandidate> out;
  enumerate_candidates(bundle, cfg, [&](const TripletCandidate &c) {
    out.push_back(c);
    return true;
  });
  return out;
}

SampleResult sample_passing(const SceneBundle &bundle, const SelectionConfig &cfg, std::size_t n,
                            std::optional<std::size_t> per_scene_cap) {
  if (n == 0) {
    throw std::invalid_argument("sample_passing requires n >= 1");
  }
  const std::size_t limit = per_scene_cap ? std::min(n, *per_scene_cap) : n;
  SampleResult result;
  enumerate_candidates(bundle, cfg, [&](const TripletCandidate &c) {
    if (c.verdict && c.verdict->passed()) {
      result.candidates.push_back(c);
    }
    return result.candidates.size() < limit;
  });
  result.exhausted = result.candidates.size() < limit;
  return result;
}

} // namespace forge
