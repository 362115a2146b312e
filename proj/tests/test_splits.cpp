#include <doctest.h>

#include <set>

#include "octlc/error.hpp"
#include "octlc/rng.hpp"
#include "octlc/splits.hpp"
#include "testutil.hpp"

using namespace octlc;
using testutil::TempDir;

TEST_CASE("published composition yields 8 one-vs-nine folds") {
  const auto manifest = testutil::synthetic_manifest(91, 9);
  const SplitPlan plan = make_splits(manifest, LesionLabel::kInvasive, 9, 1);

  CHECK(plan.folds.size() == 8);
  CHECK(plan.reserved_rare.has_value());

  std::set<std::string> rares;
  std::set<std::string> commons;
  for (const Fold& fold : plan.folds) {
    CHECK(fold.val_common.size() == 9);
    CHECK(fold.train.size() == 90);
    CHECK(manifest.lesion(fold.val_rare).label == LesionLabel::kInvasive);
    rares.insert(fold.val_rare);
    for (const auto& id : fold.val_common) {
      CHECK(manifest.lesion(id).label == LesionLabel::kBenign);
      commons.insert(id);
    }
  }
  CHECK(rares.size() == 8);         // pairwise distinct
  CHECK(commons.size() == 72);      // disjoint benign validation sets
  CHECK(rares.count(*plan.reserved_rare) == 0);

  CHECK(verify_plan(plan, manifest).empty());
}

TEST_CASE("smallest legal input: 2 rare + 1 common") {
  const auto manifest = testutil::synthetic_manifest(1, 2);
  const SplitPlan plan = make_splits(manifest, LesionLabel::kInvasive, 1, 3);
  CHECK(plan.folds.size() == 1);
  const Fold& fold = plan.folds[0];
  CHECK(fold.val_common.size() == 1);
  CHECK(fold.train.size() == 1);
  CHECK(manifest.lesion(fold.train[0]).label == LesionLabel::kInvasive);
  CHECK(verify_plan(plan, manifest).empty());
}

TEST_CASE("precondition violations are rejected") {
  SUBCASE("a single rare lesion cannot form folds") {
    const auto manifest = testutil::synthetic_manifest(5, 1);
    CHECK_THROWS_AS(make_splits(manifest, LesionLabel::kInvasive, 1, 0),
                    ValidationError);
  }
  SUBCASE("not enough common lesions for disjoint sampling") {
    const auto manifest = testutil::synthetic_manifest(5, 4);
    CHECK_THROWS_WITH_AS(make_splits(manifest, LesionLabel::kInvasive, 2, 0),
                         doctest::Contains("not enough common"), ValidationError);
  }
  SUBCASE("absent rare label") {
    const auto manifest = testutil::synthetic_manifest(5, 0);
    CHECK_THROWS_AS(make_splits(manifest, LesionLabel::kInvasive, 1, 0),
                    ValidationError);
  }
  SUBCASE("non-positive n_val_common") {
    const auto manifest = testutil::synthetic_manifest(5, 3);
    CHECK_THROWS_AS(make_splits(manifest, LesionLabel::kInvasive, 0, 0),
                    ValidationError);
  }
}

TEST_CASE("plans are deterministic in the seed") {
  const auto manifest = testutil::synthetic_manifest(30, 5);
  const SplitPlan a = make_splits(manifest, LesionLabel::kInvasive, 3, 42);
  const SplitPlan b = make_splits(manifest, LesionLabel::kInvasive, 3, 42);
  REQUIRE(a.folds.size() == b.folds.size());
  for (std::size_t i = 0; i < a.folds.size(); ++i) {
    CHECK(a.folds[i].val_rare == b.folds[i].val_rare);
    CHECK(a.folds[i].val_common == b.folds[i].val_common);
    CHECK(a.folds[i].train == b.folds[i].train);
  }

  const SplitPlan c = make_splits(manifest, LesionLabel::kInvasive, 3, 43);
  bool any_difference = false;
  for (std::size_t i = 0; i < a.folds.size(); ++i) {
    any_difference |= a.folds[i].val_rare != c.folds[i].val_rare;
    any_difference |= a.folds[i].val_common != c.folds[i].val_common;
  }
  CHECK(any_difference);
}

TEST_CASE("fold count override") {
  const auto manifest = testutil::synthetic_manifest(60, 9);

  SUBCASE("fewer folds than the default") {
    const SplitPlan plan = make_splits(manifest, LesionLabel::kInvasive, 5, 7, 4);
    CHECK(plan.folds.size() == 4);
    CHECK(plan.folds_override.has_value());
    CHECK(verify_plan(plan, manifest).empty());
  }
  SUBCASE("all rare lesions validated") {
    const SplitPlan plan = make_splits(manifest, LesionLabel::kInvasive, 5, 7, 9);
    CHECK(plan.folds.size() == 9);
    CHECK(!plan.reserved_rare.has_value());
    CHECK(verify_plan(plan, manifest).empty());
  }
  SUBCASE("override larger than the rare count") {
    CHECK_THROWS_AS(make_splits(manifest, LesionLabel::kInvasive, 5, 7, 10),
                    ValidationError);
  }
}

TEST_CASE("fold count law over random manifests") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int rare = static_cast<int>(rng.uniform_int(2, 12));
    const int n_val_common = static_cast<int>(rng.uniform_int(1, 3));
    const int common = (rare - 1) * n_val_common +
                       static_cast<int>(rng.uniform_int(0, 20));
    const auto manifest = testutil::synthetic_manifest(common, rare);
    const SplitPlan plan = make_splits(manifest, LesionLabel::kInvasive,
                                       n_val_common, rng.next_u64());
    CHECK(plan.folds.size() == static_cast<std::size_t>(rare - 1));
    CHECK(verify_plan(plan, manifest).empty());
  }
}

TEST_CASE("verify_plan names injected violations") {
  const auto manifest = testutil::synthetic_manifest(30, 5);
  SplitPlan plan = make_splits(manifest, LesionLabel::kInvasive, 3, 11);
  REQUIRE(verify_plan(plan, manifest).empty());

  SUBCASE("validation lesion leaked into training") {
    plan.folds[0].train.push_back(plan.folds[0].val_rare);
    const auto violations = verify_plan(plan, manifest);
    REQUIRE(!violations.empty());
    bool named = false;
    for (const auto& v : violations) {
      named |= v.find("fold 0") != std::string::npos &&
               v.find(plan.folds[0].val_rare) != std::string::npos;
    }
    CHECK(named);
  }
  SUBCASE("shared benign validation lesion across folds") {
    plan.folds[1].val_common[0] = plan.folds[0].val_common[0];
    const auto violations = verify_plan(plan, manifest);
    bool found = false;
    for (const auto& v : violations) {
      found |= v.find("more than one fold") != std::string::npos;
    }
    CHECK(found);
  }
  SUBCASE("wrong val_common size") {
    plan.folds[2].val_common.pop_back();
    const auto violations = verify_plan(plan, manifest);
    bool found = false;
    for (const auto& v : violations) {
      found |= v.find("expected 3") != std::string::npos;
    }
    CHECK(found);
  }
  SUBCASE("reserved rare lesion used for validation") {
    REQUIRE(plan.reserved_rare.has_value());
    plan.folds[0].val_rare = *plan.reserved_rare;
    const auto violations = verify_plan(plan, manifest);
    bool found = false;
    for (const auto& v : violations) {
      found |= v.find("reserved") != std::string::npos;
    }
    CHECK(found);
  }
}

TEST_CASE("plan files round-trip") {
  TempDir dir("splits");
  const auto manifest = testutil::synthetic_manifest(25, 4);
  const SplitPlan plan = make_splits(manifest, LesionLabel::kInvasive, 2, 5);
  save_plan(plan, dir.file("plan.json"));
  const SplitPlan loaded = load_plan(dir.file("plan.json"));

  CHECK(loaded.seed == plan.seed);
  CHECK(loaded.rare_label == plan.rare_label);
  CHECK(loaded.n_val_common == plan.n_val_common);
  CHECK(loaded.reserved_rare == plan.reserved_rare);
  REQUIRE(loaded.folds.size() == plan.folds.size());
  for (std::size_t i = 0; i < plan.folds.size(); ++i) {
    CHECK(loaded.folds[i].val_rare == plan.folds[i].val_rare);
    CHECK(loaded.folds[i].val_common == plan.folds[i].val_common);
    CHECK(loaded.folds[i].train == plan.folds[i].train);
  }
  CHECK(verify_plan(loaded, manifest).empty());
}
