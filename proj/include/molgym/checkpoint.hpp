#pragma once

#include <string>

#include "molgym/nn.hpp"

namespace molgym {

/// Versioned text checkpoint listing every named parameter tensor as
/// (name, shape, row-major values printed with %.17g, which round-trips
/// doubles exactly). Covariant matrices keep their interleaved
/// real/imaginary layout because shapes are stored verbatim.
void save_checkpoint(const std::string& path, const nn::ParamStore& params);
std::string checkpoint_to_string(const nn::ParamStore& params);

/// Loads into an existing store; shapes and the full name set must match.
void load_checkpoint(const std::string& path, nn::ParamStore& params);
void load_checkpoint_from_string(const std::string& text, nn::ParamStore& params);

}  // namespace molgym
