#pragma once

#include <span>

namespace keco {

/// u.v / (|u||v|) in double precision. Throws ZeroNormVector or DimensionMismatch.
double cosine_similarity(std::span<const double> u, std::span<const double> v);
double cosine_similarity(std::span<const double> u, std::span<const float> v);

}  // namespace keco
