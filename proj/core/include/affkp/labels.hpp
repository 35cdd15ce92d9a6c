#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "affkp/error.hpp"

namespace affkp {

// Seven-way label scheme: 0 is background, 1..6 are the affordance classes.
enum class Affordance : std::uint8_t {
  kBackground = 0,
  kGrasp = 1,
  kCut = 2,
  kScoop = 3,
  kContain = 4,
  kPound = 5,
  kWrapGrasp = 6,
};

inline constexpr int kNumClasses = 7;
inline constexpr int kKeypointSlots = 4;

inline constexpr std::array<const char*, kNumClasses> kAffordanceNames = {
    "background", "grasp", "cut", "scoop", "contain", "pound", "w-grasp"};

inline const char* affordance_name(std::uint8_t label) {
  if (label >= kNumClasses) throw DataError("affordance label out of range: " + std::to_string(label));
  return kAffordanceNames[label];
}

// Display colors, one per class (white background, yellow contain, purple
// w-grasp, red grasp, cyan pound, green cut, blue scoop).
inline constexpr std::array<std::array<double, 3>, kNumClasses> kAffordanceColors = {{
    {0.92, 0.92, 0.92},  // background
    {0.85, 0.12, 0.12},  // grasp
    {0.10, 0.75, 0.15},  // cut
    {0.15, 0.25, 0.85},  // scoop
    {0.90, 0.85, 0.10},  // contain
    {0.10, 0.80, 0.80},  // pound
    {0.65, 0.15, 0.75},  // w-grasp
}};

}  // namespace affkp
