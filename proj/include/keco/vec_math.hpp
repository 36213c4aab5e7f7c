#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace keco {

// Small dense helpers. Accumulation is always in double, in index order.

template <typename A, typename B>
double dot(std::span<const A> a, std::span<const B> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

template <typename A>
double norm(std::span<const A> a) {
  return std::sqrt(dot(a, a));
}

template <typename A, typename B>
double euclidean_distance(std::span<const A> a, std::span<const B> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

template <typename T>
std::vector<double> to_double(std::span<const T> v) {
  return std::vector<double>(v.begin(), v.end());
}

}  // namespace keco
