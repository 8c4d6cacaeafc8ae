#pragma once

#include <algorithm>
#include <vector>

namespace bmpc {

/// Association schedule for the inclusive scans.
///   sequential — plain left/right fold, O(N) depth.
///   tree       — work-efficient up-sweep/down-sweep over a balanced binary
///                tree, O(log N) depth; the schedule a data-parallel backend
///                would execute. Handles arbitrary N without padding, so the
///                operator needs no identity element.
/// Both orders produce identical results up to floating-point association.
enum class ScanOrder { sequential, tree };

namespace detail {

template <class T, class Op>
void tree_prefix_inplace(std::vector<T>& a, const Op& op) {
  const size_t n = a.size();
  if (n < 2) return;
  // Up-sweep: combine adjacent pairs; an odd tail passes through.
  std::vector<T> pairs;
  pairs.reserve((n + 1) / 2);
  for (size_t i = 0; 2 * i + 1 < n; ++i) pairs.push_back(op(a[2 * i], a[2 * i + 1]));
  if (n % 2 == 1) pairs.push_back(a[n - 1]);
  tree_prefix_inplace(pairs, op);
  // Down-sweep: odd outputs come from the scanned pairs, even outputs
  // combine the previous pair prefix with the original element.
  for (size_t i = (n - 1) / 2; i >= 1; --i) {
    a[2 * i] = op(pairs[i - 1], a[2 * i]);
    if (2 * i + 1 < n) a[2 * i + 1] = pairs[i];
  }
  a[1] = pairs[0];
}

}  // namespace detail

/// out[i] = e[0] (+) e[1] (+) ... (+) e[i].
template <class T, class Op>
std::vector<T> inclusive_prefix_scan(std::vector<T> elems, const Op& op,
                                     ScanOrder order = ScanOrder::tree) {
  if (order == ScanOrder::sequential) {
    for (size_t i = 1; i < elems.size(); ++i) elems[i] = op(elems[i - 1], elems[i]);
    return elems;
  }
  detail::tree_prefix_inplace(elems, op);
  return elems;
}

/// out[i] = e[i] (+) e[i+1] (+) ... (+) e[n-1].
template <class T, class Op>
std::vector<T> inclusive_suffix_scan(std::vector<T> elems, const Op& op,
                                     ScanOrder order = ScanOrder::tree) {
  if (order == ScanOrder::sequential) {
    for (size_t i = elems.size(); i-- > 1;) elems[i - 1] = op(elems[i - 1], elems[i]);
    return elems;
  }
  std::reverse(elems.begin(), elems.end());
  auto flipped = [&op](const T& a, const T& b) { return op(b, a); };
  detail::tree_prefix_inplace(elems, flipped);
  std::reverse(elems.begin(), elems.end());
  return elems;
}

}  // namespace bmpc
