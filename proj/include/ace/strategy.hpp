#pragma once

#include <string>
#include <string_view>

namespace ace {

/// Which confidence signal gates admission: the max class probability
/// (higher is more confident) or the prediction entropy (lower is more
/// confident).
enum class Strategy { Probability, Entropy };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view text);

}  // namespace ace
