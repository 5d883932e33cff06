#include "ace/strategy.hpp"

#include "ace/error.hpp"

namespace ace {

std::string_view to_string(Strategy s) { return s == Strategy::Probability ? "probability" : "entropy"; }

Strategy parse_strategy(std::string_view text) {
    if (text == "probability") return Strategy::Probability;
    if (text == "entropy") return Strategy::Entropy;
    throw Error(ErrorCode::ConfigInvalid, "unknown strategy '" + std::string(text) + "'");
}

}  // namespace ace
