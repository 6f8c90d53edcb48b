#include "latrescore/lattice.hpp"

#include <cmath>

#include "catch2/catch_amalgamated.hpp"
#include "latrescore/rng.hpp"
#include "testutil.hpp"

using namespace latrescore;
namespace tu = latrescore::testutil;

namespace {

Lattice two_state() {
  Lattice lat;
  lat.utterance_id = "u";
  lat.num_states = 2;
  lat.arcs.push_back({0, 1, 4, 0.5, 1.0});
  lat.final_states[1] = 0.0;
  return lat;
}

}  // namespace

TEST_CASE("validate accepts a minimal well-formed lattice", "[lattice]") {
  ValidationResult r = validate(two_state());
  REQUIRE(r.ok);
  REQUIRE(r.issues.empty());
}

TEST_CASE("validate rejects a 2-cycle", "[lattice]") {
  Lattice lat;
  lat.num_states = 2;
  lat.arcs.push_back({0, 1, 4, 0.0, 0.0});
  lat.arcs.push_back({1, 0, 5, 0.0, 0.0});
  lat.final_states[1] = 0.0;
  REQUIRE_THROWS_AS(validate(lat), CyclicLatticeError);
}

TEST_CASE("validate rejects missing final / initial states", "[lattice]") {
  Lattice lat = two_state();
  lat.final_states.clear();
  REQUIRE_THROWS_AS(validate(lat), NoFinalStateError);

  Lattice lat2 = two_state();
  lat2.initial_state = 9;
  REQUIRE_THROWS_AS(validate(lat2), NoInitialStateError);

  Lattice lat3 = two_state();
  lat3.arcs[0].ac_cost = std::nan("");
  REQUIRE_THROWS_AS(validate(lat3), MalformedLatticeError);
}

TEST_CASE("validate trim removes a dangling state", "[lattice]") {
  Lattice lat = two_state();
  lat.num_states = 6;  // state 5 has no arcs at all
  ValidationResult r = validate(lat, /*trim=*/true);
  REQUIRE_FALSE(r.ok);
  REQUIRE(r.lattice.num_states == 2);
  REQUIRE(r.lattice.arcs.size() == 1);
}

TEST_CASE("validate trim keeps every state on a complete path", "[lattice]") {
  Rng rng(101);
  for (int t = 0; t < 50; ++t) {
    Lattice lat = tu::random_lattice(rng);
    // Add a state reachable from 0 but not co-reachable.
    lat.num_states++;
    lat.arcs.push_back({0, lat.num_states - 1, 4, 0.1, 0.1});
    Lattice trimmed = validate(lat, true).lattice;
    ValidationResult again = validate(trimmed, true);
    REQUIRE(again.ok);
    REQUIRE(again.lattice == trimmed);
  }
}

TEST_CASE("topo_sort is the identity on sorted lattices", "[lattice]") {
  Lattice lat = two_state();
  REQUIRE(topo_sort(lat) == lat);
}

TEST_CASE("topo_sort relabels an unsorted chain", "[lattice]") {
  // states {2 -> 0 "a"(4), 0 -> 1 "b"(5)}, initial=2, final=1.
  Lattice lat;
  lat.num_states = 3;
  lat.initial_state = 2;
  lat.arcs.push_back({2, 0, 4, 0.25, 0.5});
  lat.arcs.push_back({0, 1, 5, 0.75, 1.5});
  lat.final_states[1] = 0.125;

  auto before = tu::path_multiset(lat);
  Lattice sorted = topo_sort(lat);
  REQUIRE(sorted.initial_state == 0);
  REQUIRE(sorted.arcs.size() == 2);
  REQUIRE(sorted.arcs[0] == Arc{0, 1, 4, 0.25, 0.5});
  REQUIRE(sorted.arcs[1] == Arc{1, 2, 5, 0.75, 1.5});
  REQUIRE(sorted.final_states.at(2) == 0.125);
  REQUIRE(tu::path_multiset(sorted) == before);
}

TEST_CASE("topo_sort preserves the path multiset on random DAGs",
          "[lattice]") {
  Rng rng(7);
  for (int t = 0; t < 40; ++t) {
    Lattice lat = tu::random_small_lattice(rng);
    // Scramble state labels through a random permutation.
    std::vector<StateId> perm(lat.num_states);
    for (StateId s = 0; s < lat.num_states; ++s) perm[s] = s;
    rng.shuffle(perm);
    Lattice scrambled = lat;
    scrambled.initial_state = perm[lat.initial_state];
    scrambled.final_states.clear();
    for (auto &[s, c] : lat.final_states) scrambled.final_states[perm[s]] = c;
    for (size_t i = 0; i < lat.arcs.size(); ++i) {
      scrambled.arcs[i].src = perm[lat.arcs[i].src];
      scrambled.arcs[i].dst = perm[lat.arcs[i].dst];
    }
    Lattice sorted = topo_sort(scrambled);
    REQUIRE(sorted.initial_state == 0);
    for (const Arc &a : sorted.arcs) REQUIRE(a.src < a.dst);
    REQUIRE(tu::path_multiset(sorted) == tu::path_multiset(lat));
  }
}

TEST_CASE("topo_sort throws on cycles", "[lattice]") {
  Lattice lat;
  lat.num_states = 3;
  lat.arcs.push_back({0, 1, 4, 0, 0});
  lat.arcs.push_back({1, 2, 4, 0, 0});
  lat.arcs.push_back({2, 1, 4, 0, 0});
  lat.final_states[2] = 0.0;
  REQUIRE_THROWS_AS(topo_sort(lat), CyclicLatticeError);
}

TEST_CASE("augment wraps a 1-arc lattice", "[lattice]") {
  Lattice lat = two_state();
  lat.final_states[1] = 0.5;
  Lattice aug = augment(lat);
  REQUIRE(aug.num_states == 4);
  REQUIRE(aug.arcs.size() == 3);
  REQUIRE(aug.initial_state == 0);
  REQUIRE(aug.arcs[0].word == kBosId);
  REQUIRE(aug.arcs[0].lm_cost == 0.0);
  REQUIRE(aug.arcs[0].ac_cost == 0.0);
  REQUIRE(aug.arcs[1].word == 4);
  REQUIRE(aug.arcs[2].word == kEosId);
  REQUIRE(aug.arcs[2].lm_cost == 0.5);
  REQUIRE(aug.arcs[2].ac_cost == 0.0);
  REQUIRE(aug.final_states.size() == 1);
  REQUIRE(aug.final_states.begin()->second == 0.0);
}

TEST_CASE("augment adds one </s> arc per final state", "[lattice]") {
  Lattice lat;
  lat.num_states = 3;
  lat.arcs.push_back({0, 1, 4, 0.1, 0.1});
  lat.arcs.push_back({0, 2, 5, 0.2, 0.2});
  lat.final_states[1] = 0.3;
  lat.final_states[2] = 0.4;
  Lattice aug = augment(lat);
  int bos = 0, eos = 0;
  for (const Arc &a : aug.arcs) {
    bos += a.word == kBosId;
    eos += a.word == kEosId;
  }
  REQUIRE(bos == 1);
  REQUIRE(eos == 2);
  REQUIRE(aug.num_states == lat.num_states + 2);
  REQUIRE(aug.arcs.size() == lat.arcs.size() + 3);
}

TEST_CASE("augment twice is rejected", "[lattice]") {
  Lattice aug = augment(two_state());
  REQUIRE_THROWS_AS(augment(aug), AlreadyAugmentedError);
}

TEST_CASE("augment rejects oversized lattices", "[lattice]") {
  Lattice lat;
  lat.num_states = kMaxLatticeStates + 1;
  for (StateId s = 0; s + 1 < lat.num_states; ++s) {
    lat.arcs.push_back({s, s + 1, 4, 0.0, 0.0});
  }
  lat.final_states[lat.num_states - 1] = 0.0;
  REQUIRE_THROWS_AS(augment(lat), PositionOverflowError);
}

TEST_CASE("augment preserves total path costs", "[lattice]") {
  Rng rng(21);
  for (int t = 0; t < 30; ++t) {
    Lattice lat = tu::random_small_lattice(rng);
    auto before = enumerate_paths(lat);
    auto after = enumerate_paths(augment(lat));
    REQUIRE(before.size() == after.size());
    std::vector<double> totals_before, totals_after;
    for (const auto &p : before) totals_before.push_back(p.lm_cost + p.ac_cost);
    for (const auto &p : after) {
      totals_after.push_back(p.lm_cost + p.ac_cost);
      REQUIRE(p.words.front() == kBosId);
      REQUIRE(p.words.back() == kEosId);
    }
    std::sort(totals_before.begin(), totals_before.end());
    std::sort(totals_after.begin(), totals_after.end());
    for (size_t i = 0; i < totals_before.size(); ++i) {
      REQUIRE(totals_after[i] == Catch::Approx(totals_before[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("enumerate_paths on a diamond", "[lattice]") {
  Lattice lat;
  lat.num_states = 4;
  lat.arcs.push_back({0, 1, 4, 0, 0});
  lat.arcs.push_back({1, 3, 6, 0, 0});
  lat.arcs.push_back({0, 2, 5, 0, 0});
  lat.arcs.push_back({2, 3, 6, 0, 0});
  lat.final_states[3] = 0.0;
  auto paths = enumerate_paths(lat);
  REQUIRE(paths.size() == 2);
  REQUIRE(paths[0].words == std::vector<WordId>{4, 6});
  REQUIRE(paths[1].words == std::vector<WordId>{5, 6});
}

TEST_CASE("enumerate_paths on a chain yields one path", "[lattice]") {
  Lattice lat;
  lat.num_states = 6;
  for (StateId s = 0; s < 5; ++s) lat.arcs.push_back({s, s + 1, 4, 0.5, 0.25});
  lat.final_states[5] = 1.0;
  auto paths = enumerate_paths(lat);
  REQUIRE(paths.size() == 1);
  REQUIRE(paths[0].words.size() == 5);
  REQUIRE(paths[0].lm_cost == Catch::Approx(0.5 * 5 + 1.0));
  REQUIRE(paths[0].ac_cost == Catch::Approx(0.25 * 5));
}

TEST_CASE("enumerate_paths limit triggers on stacked diamonds", "[lattice]") {
  Lattice lat;
  lat.num_states = 21;
  for (int d = 0; d < 10; ++d) {
    StateId base = 2 * d;
    lat.arcs.push_back({base, base + 1, 4, 0, 0});
    lat.arcs.push_back({base, base + 1, 5, 0, 0});
    lat.arcs.push_back({base + 1, base + 2, 6, 0, 0});
  }
  lat.final_states[20] = 0.0;
  REQUIRE_THROWS_AS(enumerate_paths(lat, 100), TooManyPathsError);
  REQUIRE(enumerate_paths(lat, 2000).size() == 1024);
}

TEST_CASE("prune with infinite beam equals trimmed input", "[lattice]") {
  Rng rng(31);
  for (int t = 0; t < 20; ++t) {
    Lattice lat = tu::random_lattice(rng);
    Lattice trimmed = validate(lat, true).lattice;
    REQUIRE(prune(lat, kInfCost) == trimmed);
  }
}

TEST_CASE("prune drops a path outside the beam", "[lattice]") {
  Lattice lat;
  lat.num_states = 3;
  lat.arcs.push_back({0, 1, 4, 5.0, 5.0});   // path cost 10
  lat.arcs.push_back({0, 2, 5, 7.5, 7.5});   // path cost 15
  lat.arcs.push_back({1, 2, 6, 0.0, 0.0});
  lat.final_states[2] = 0.0;
  Lattice pruned = prune(lat, 4.0);
  auto paths = enumerate_paths(pruned);
  REQUIRE(paths.size() == 1);
  REQUIRE(paths[0].words == std::vector<WordId>{4, 6});
}

TEST_CASE("prune respects per-arc through costs (brute force)", "[lattice]") {
  Rng rng(33);
  for (int t = 0; t < 40; ++t) {
    Lattice lat = tu::random_small_lattice(rng);
    double beam = 4.0;
    Lattice pruned = prune(lat, beam);

    // Brute force: best complete-path cost through each arc.
    auto paths = enumerate_paths(lat);
    double best = kInfCost;
    for (const auto &p : paths) best = std::min(best, p.lm_cost + p.ac_cost);

    // Best path must survive; surviving arcs must be within the beam.
    auto pruned_paths = enumerate_paths(pruned);
    double pruned_best = kInfCost;
    for (const auto &p : pruned_paths) {
      pruned_best = std::min(pruned_best, p.lm_cost + p.ac_cost);
    }
    REQUIRE(pruned_best == Catch::Approx(best).epsilon(1e-12));

    for (size_t ai = 0; ai < pruned.arcs.size(); ++ai) {
      double through = kInfCost;
      for (const auto &p : pruned_paths) {
        for (int idx : p.arc_indices) {
          if (idx == static_cast<int>(ai)) {
            through = std::min(through, p.lm_cost + p.ac_cost);
          }
        }
      }
      REQUIRE(through <= best + beam + 1e-9);
    }
  }
}

TEST_CASE("prune is monotone in the beam", "[lattice]") {
  Rng rng(35);
  for (int t = 0; t < 20; ++t) {
    Lattice lat = tu::random_small_lattice(rng);
    Lattice tight = prune(lat, 1.0);
    Lattice loose = prune(lat, 3.0);
    // Every path of the tight lattice exists in the loose one.
    auto tight_paths = tu::path_multiset(tight);
    auto loose_paths = tu::path_multiset(loose);
    for (const auto &p : tight_paths) {
      REQUIRE(std::find(loose_paths.begin(), loose_paths.end(), p) !=
              loose_paths.end());
    }
  }
}
