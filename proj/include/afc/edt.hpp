// Exact 3D Euclidean distance transform (Felzenszwalb & Huttenlocher,
// separable lower-envelope passes) on the voxel lattice. Distances are
// between cell centers, computed in squared voxel units.
#pragma once

#include <cstdint>
#include <limits>

#include "afc/grid.hpp"

namespace afc {

namespace detail {

constexpr int32_t kEdtInf = 1 << 29;

// 1D squared distance transform over a strided row.
inline void edt_1d(const int32_t* f, int32_t* d, int n, int* v, int32_t* z) {
  int k = 0;
  v[0] = 0;
  z[0] = -kEdtInf;
  z[1] = kEdtInf;
  for (int q = 1; q < n; ++q) {
    int32_t s;
    while (true) {
      const int p = v[k];
      // Intersection of parabolas from p and q (integer-safe: values fit 64-bit).
      const int64_t num = (static_cast<int64_t>(f[q]) + static_cast<int64_t>(q) * q) -
                          (static_cast<int64_t>(f[p]) + static_cast<int64_t>(p) * p);
      s = static_cast<int32_t>(num / (2 * (q - p)));
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kEdtInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const int dq = q - v[k];
    const int64_t val = static_cast<int64_t>(dq) * dq + f[v[k]];
    d[q] = static_cast<int32_t>(std::min<int64_t>(val, kEdtInf));
  }
}

}  // namespace detail

// Squared distances (voxel units) to the nearest source cell. `is_source(i)`
// is evaluated on linear indices of `ref`. Cells with no source anywhere get
// a large sentinel (>= kEdtInf / 2).
template <typename T, typename SourcePred>
VoxelGrid<uint16_t> squared_edt(const VoxelGrid<T>& ref, SourcePred&& is_source) {
  const int nx = ref.nx(), ny = ref.ny(), nz = ref.nz();
  VoxelGrid<int32_t> tmp(ref.dims(), ref.resolution(), ref.origin(), 0);
  for (size_t i = 0; i < ref.size(); ++i)
    tmp[i] = is_source(i) ? 0 : detail::kEdtInf;

  const int nmax = std::max({nx, ny, nz});
  std::vector<int32_t> f(nmax), d(nmax), z(nmax + 1);
  std::vector<int> v(nmax);

  // x pass
  for (int zc = 0; zc < nz; ++zc)
    for (int y = 0; y < ny; ++y) {
      int32_t* row = &tmp.at(0, y, zc);
      detail::edt_1d(row, d.data(), nx, v.data(), z.data());
      std::copy(d.begin(), d.begin() + nx, row);
    }
  // y pass
  for (int zc = 0; zc < nz; ++zc)
    for (int x = 0; x < nx; ++x) {
      for (int y = 0; y < ny; ++y) f[y] = tmp.at(x, y, zc);
      detail::edt_1d(f.data(), d.data(), ny, v.data(), z.data());
      for (int y = 0; y < ny; ++y) tmp.at(x, y, zc) = d[y];
    }
  // z pass
  for (int y = 0; y < ny; ++y)
    for (int x = 0; x < nx; ++x) {
      for (int zc = 0; zc < nz; ++zc) f[zc] = tmp.at(x, y, zc);
      detail::edt_1d(f.data(), d.data(), nz, v.data(), z.data());
      for (int zc = 0; zc < nz; ++zc) tmp.at(x, y, zc) = d[zc];
    }

  VoxelGrid<uint16_t> out(ref.dims(), ref.resolution(), ref.origin(), 0);
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<uint16_t>(
        std::min<int32_t>(tmp[i], std::numeric_limits<uint16_t>::max()));
  return out;
}

}  // namespace afc
