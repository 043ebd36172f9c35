#include "oracles.hpp"

#include "forge/labeling.hpp"
#include "forge/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace forge;

namespace {

const ScaledThresholds kFull{1000.0, 300.0};

InstanceMap map_with(int w, int h, const std::vector<std::pair<InstanceId, Rect>> &rects) {
  InstanceMap m(w, h, 0);
  for (const auto &[id, r] : rects) {
    for (int y = r.y; y < r.bottom(); ++y) {
      for (int x = r.x; x < r.right(); ++x) {
        m.at(x, y) = id;
      }
    }
  }
  return m;
}

} // namespace

TEST_CASE("thresholds scale with image area") {
  const ScaledThresholds full = scaled_thresholds(1024, 768, LabelingConfig{});
  CHECK(full.threshold == doctest::Approx(1000.0));
  CHECK(full.floor == doctest::Approx(300.0));
  const ScaledThresholds half = scaled_thresholds(512, 384, LabelingConfig{});
  CHECK(half.threshold == doctest::Approx(250.0));
  CHECK(half.floor == doctest::Approx(75.0));
}

TEST_CASE("26 qualifying objects are all kept") {
  std::map<InstanceId, long long> areas;
  for (InstanceId id = 1; id <= 26; ++id) {
    areas[id] = 1000 + id * 10;
  }
  const auto out = select_by_area(areas, 7, kFull, LabelingConfig{});
  CHECK(out.size() == 26);
  CHECK(out.front() == 26);
}

TEST_CASE("30 qualify with the answer ranked 28th") {
  std::map<InstanceId, long long> areas;
  for (InstanceId id = 1; id <= 30; ++id) {
    areas[id] = 5000 - id * 100; // id order is rank order
  }
  const auto out = select_by_area(areas, 28, kFull, LabelingConfig{});
  REQUIRE(out.size() == 26);
  for (InstanceId id = 1; id <= 25; ++id) {
    CHECK(out[static_cast<std::size_t>(id - 1)] == id);
  }
  CHECK(out.back() == 28);
}

TEST_CASE("relaxation halves the threshold once") {
  std::map<InstanceId, long long> areas{{1, 4000}, {2, 2000}, {3, 1200}, {4, 900},
                                        {5, 700},  {6, 600},  {7, 510},  {8, 320}};
  const auto out = select_by_area(areas, 1, kFull, LabelingConfig{});
  CHECK(out.size() == 7);
  CHECK(std::find(out.begin(), out.end(), 8) == out.end());
}

TEST_CASE("relaxation stops at the floor") {
  std::map<InstanceId, long long> areas{{1, 4000}, {2, 290}, {3, 310}};
  const auto out = select_by_area(areas, 1, kFull, LabelingConfig{});
  CHECK(out == std::vector<InstanceId>{1, 3});
}

TEST_CASE("answer below threshold is still labeled, below the floor is an error") {
  std::map<InstanceId, long long> areas{{1, 4000}, {2, 3000}, {3, 2500}, {4, 2200}, {5, 2100}, {6, 400}};
  const auto out = select_by_area(areas, 6, kFull, LabelingConfig{});
  CHECK(out.size() == 6);
  CHECK(out.back() == 6);
  areas[6] = 200;
  CHECK_THROWS_AS(select_by_area(areas, 6, kFull, LabelingConfig{}), UnlabelableError);
  CHECK_THROWS_AS(select_by_area(areas, 99, kFull, LabelingConfig{}), UnlabelableError);
}

TEST_CASE("selection agrees with the oracle on random area vectors") {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    std::map<InstanceId, long long> areas;
    const int n = 1 + static_cast<int>(rng.below(40));
    for (int i = 0; i < n; ++i) {
      areas[static_cast<InstanceId>(i + 1)] = static_cast<long long>(rng.below(4000));
    }
    const InstanceId answer = static_cast<InstanceId>(1 + rng.below(static_cast<std::uint64_t>(n)));
    const auto expected = oracle::select_labels(areas, answer, 1000, 300, 26, 5);
    if (!expected) {
      CHECK_THROWS_AS(select_by_area(areas, answer, kFull, LabelingConfig{}), UnlabelableError);
      continue;
    }
    const auto got = select_by_area(areas, answer, kFull, LabelingConfig{});
    REQUIRE(got == *expected);
    CHECK(std::find(got.begin(), got.end(), answer) != got.end());
    for (const InstanceId id : got) {
      CHECK(areas[id] >= 300);
    }
  }
}

TEST_CASE("letters follow centroid raster order") {
  const InstanceMap m = map_with(300, 300, {{5, Rect{195, 5, 10, 10}}, {9, Rect{5, 5, 10, 10}}});
  const LabelAssignment a = assign_letters(m, {5, 9}, 5);
  REQUIRE(a.entries.size() == 2);
  CHECK(a.entries[0].object_id == 9);
  CHECK(a.entries[0].letter == 'A');
  CHECK(a.entries[1].letter == 'B');
  CHECK(a.answer_letter == 'B');
  const LabelAssignment single = assign_letters(m, {9}, 9);
  CHECK(single.answer_letter == 'A');
}

TEST_CASE("letters match a brute-force sort on random layouts") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<InstanceId, Rect>> rects;
    std::vector<InstanceId> ids;
    const int n = 1 + static_cast<int>(rng.below(26));
    for (int i = 0; i < n; ++i) {
      const int gx = i % 6;
      const int gy = i / 6;
      const Rect r{gx * 50 + static_cast<int>(rng.below(30)), gy * 50 + static_cast<int>(rng.below(30)),
                   1 + static_cast<int>(rng.below(18)), 1 + static_cast<int>(rng.below(18))};
      rects.push_back({static_cast<InstanceId>(100 - i), r});
      ids.push_back(static_cast<InstanceId>(100 - i));
    }
    const InstanceMap m = map_with(320, 260, rects);
    struct Key {
      long long y, x;
      InstanceId id;
    };
    std::vector<Key> keys;
    for (const auto &[id, r] : rects) {
      // integer centroid of a rectangle, rounded half up
      const long long sx2 = 2LL * r.x + r.w - 1;
      const long long sy2 = 2LL * r.y + r.h - 1;
      keys.push_back({(sy2 + 1) / 2, (sx2 + 1) / 2, id});
    }
    std::sort(keys.begin(), keys.end(), [](const Key &a, const Key &b) {
      return std::tie(a.y, a.x, a.id) < std::tie(b.y, b.x, b.id);
    });
    const InstanceId answer = ids[rng.below(ids.size())];
    const LabelAssignment a = assign_letters(m, ids, answer);
    REQUIRE(a.entries.size() == keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) {
      CHECK(a.entries[i].object_id == keys[i].id);
      CHECK(a.entries[i].letter == static_cast<char>('A' + i));
      if (keys[i].id == answer) {
        CHECK(a.answer_letter == a.entries[i].letter);
      }
    }
  }
}

TEST_CASE("render_labels leaves the rest of the image alone") {
  RgbImage img(200, 150);
  for (int y = 0; y < 150; ++y) {
    for (int x = 0; x < 200; ++x) {
      img.at(x, y, 0) = static_cast<std::uint8_t>(x);
      img.at(x, y, 1) = static_cast<std::uint8_t>(y);
      img.at(x, y, 2) = 17;
    }
  }
  CHECK(render_labels(img, LabelAssignment{}) == img);
  LabelAssignment a;
  a.entries = {{'A', 1, Pixel{0, 0}, 500}, {'B', 2, Pixel{100, 75}, 500}, {'C', 3, Pixel{102, 76}, 500}};
  const auto tags = layout_tags(200, 150, a);
  REQUIRE(tags.size() == 3);
  for (const auto &t : tags) {
    CHECK(t.box.x >= 0);
    CHECK(t.box.y >= 0);
    CHECK(t.box.right() <= 200);
    CHECK(t.box.bottom() <= 150);
  }
  CHECK(tags[0].box.x == 0);
  CHECK(tags[0].box.y == 0);
  // C collides with B and moves down by exactly one tag height
  CHECK(tags[2].box.y == tags[1].box.y + tags[1].box.h + (76 - 75));
  CHECK_FALSE(tags[2].box.intersects(tags[1].box));
  const RgbImage out = render_labels(img, a);
  bool changed = false;
  for (int y = 0; y < 150; ++y) {
    for (int x = 0; x < 200; ++x) {
      const bool inside = std::any_of(tags.begin(), tags.end(), [&](const TagPlacement &t) { return t.box.contains(x, y); });
      const bool same = out.at(x, y, 0) == img.at(x, y, 0) && out.at(x, y, 1) == img.at(x, y, 1) &&
                        out.at(x, y, 2) == img.at(x, y, 2);
      if (!inside) {
        REQUIRE(same);
      } else if (!same) {
        changed = true;
      }
    }
  }
  CHECK(changed);
  CHECK(glyph_scale(150, LabelStyle{}) * 7 >= 8);
}

TEST_CASE("answer key round-trips through JSON") {
  const InstanceMap m = map_with(100, 100, {{3, Rect{10, 10, 20, 20}}, {4, Rect{60, 60, 20, 20}}});
  const LabelAssignment a = assign_letters(m, {3, 4}, 4);
  std::map<InstanceId, InstanceInfo> table{{3, {"chair", "chair"}}, {4, {"lamp", "lamp"}}};
  const AnswerKey key = make_answer_key("p1", a, table);
  CHECK(key.answer_letter == 'B');
  CHECK(key.num_labels() == 2);
  CHECK(key.letters[1].category == "lamp");
  const nlohmann::json j = to_json(key);
  CHECK(j.at("num_labels") == 2);
  const AnswerKey back = answer_key_from_json(j);
  CHECK(back.pair_id == "p1");
  CHECK(back.answer_letter == 'B');
  CHECK(back.letters.size() == 2);
  CHECK(back.letters[0].object_id == 3);
}
