#include "keco/similarity.hpp"

#include <string>

#include "keco/error.hpp"
#include "keco/vec_math.hpp"

namespace keco {

namespace {

template <typename A, typename B>
double cosine_impl(std::span<const A> u, std::span<const B> v) {
  if (u.size() != v.size())
    throw Error(ErrorCode::DimensionMismatch,
                "cosine of dims " + std::to_string(u.size()) + " and " + std::to_string(v.size()));
  const double nu = norm(u);
  const double nv = norm(v);
  if (nu == 0.0 || nv == 0.0) throw Error(ErrorCode::ZeroNormVector, "cosine similarity operand");
  return dot(u, v) / (nu * nv);
}

}  // namespace

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  return cosine_impl(u, v);
}

double cosine_similarity(std::span<const double> u, std::span<const float> v) {
  return cosine_impl(u, v);
}

}  // namespace keco
