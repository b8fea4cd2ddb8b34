#pragma once

#include <string>
#include <string_view>

#include "dialogcode/codebook.hpp"

namespace dialogcode {

// One model answer resolved against the codebook. `event` is set for the
// event and combined dimensions, `act` for act and combined.
struct ParsedPrediction {
  Dimension dimension = Dimension::kEvent;
  std::string event;
  std::string act;
  std::string confidence_note;  // reasoning that preceded the label, if any

  // The vote key: event name, act name, or the "<Event>-<Act>" rendering.
  std::string label() const;
};

// Extracts the final label from a possibly verbose reply. A trailing
// "Label: ..." line wins; otherwise the last label mentioned anywhere is
// taken. Matching ignores case and whitespace runs. Combined answers split on
// their final '-'. Throws ResponseParseError when nothing resolves.
ParsedPrediction parse_code_response(std::string_view raw, const Codebook& cb, Dimension dimension);

// The follow-up instruction sent once when a reply cannot be parsed.
std::string repair_instruction(const Codebook& cb, Dimension dimension);

}  // namespace dialogcode
