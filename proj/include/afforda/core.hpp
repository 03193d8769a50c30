#pragma once

#include <string_view>

#include "afforda/error.hpp"
#include "afforda/types.hpp"

namespace afforda {

// Splits a "<verb> the <noun>" narration at the last standalone "the".
// Both sides are lowercased and whitespace-normalized.
Instruction parse_narration(std::string_view raw);

// Frame with the highest detection confidence, earliest on ties.
int select_peak_detection(const InteractionClip& clip);

}  // namespace afforda
