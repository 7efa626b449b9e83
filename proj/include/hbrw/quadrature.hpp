#pragma once

#include <array>
#include <cmath>

namespace hbrw::quad {

// Gauss-Kronrod 7/15 on [-1, 1]. Abscissae are listed for the nonnegative half
// (index 7 is the centre); odd indices are the embedded Gauss points.
inline constexpr std::array<double, 8> kKronrodX{
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};

inline constexpr std::array<double, 8> kKronrodW{
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};

inline constexpr std::array<double, 4> kGaussW{
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Node {
  double x;   // on [-1, 1]
  double wk;  // Kronrod weight
  double wg;  // Gauss weight, 0 for Kronrod-only nodes
};

// The 15 nodes in ascending order.
constexpr std::array<Node, 15> gk15_nodes() {
  std::array<Node, 15> out{};
  for (int i = 0; i < 7; ++i) {
    const double wg = (i % 2 == 1) ? kGaussW[i / 2] : 0.0;
    out[i] = {-kKronrodX[i], kKronrodW[i], wg};
    out[14 - i] = {kKronrodX[i], kKronrodW[i], wg};
  }
  out[7] = {0.0, kKronrodW[7], kGaussW[3]};
  return out;
}

inline constexpr std::array<Node, 15> kGK15 = gk15_nodes();

struct Estimate {
  double value = 0.0;
  double error = 0.0;
};

// GK15 on [a, b]; error is |K15 - G7|.
template <class F>
Estimate gk15(F&& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  double k = 0.0;
  double g = 0.0;
  for (const auto& n : kGK15) {
    const double v = f(c + h * n.x);
    k += n.wk * v;
    g += n.wg * v;
  }
  return {k * h, std::abs((k - g) * h)};
}

}  // namespace hbrw::quad
