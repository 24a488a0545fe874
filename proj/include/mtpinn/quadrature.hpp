#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtpinn {

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QuadratureOptions {
  double abs_tol = 1e-10;
  std::size_t max_intervals = std::size_t{1} << 16;
};

// Adaptive Simpson on [a, b]. The tolerance is split between the two halves
// at every refinement, so the accepted pieces sum to within abs_tol overall.
// Throws QuadratureError once more than max_intervals pieces are live.
template <typename F>
double adaptive_simpson(F&& f, double a, double b,
                        const QuadratureOptions& opts = {}) {
  if (a == b) return 0.0;

  struct Piece {
    double a, b, fa, fm, fb, whole, tol;
  };
  const auto simpson = [](double a, double b, double fa, double fm, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  };

  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  std::vector<Piece> stack{{a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), opts.abs_tol}};

  double total = 0.0;
  double compensation = 0.0;
  std::size_t live = 1;
  while (!stack.empty()) {
    Piece p = stack.back();
    stack.pop_back();
    const double m = 0.5 * (p.a + p.b);
    const double lm = 0.5 * (p.a + m);
    const double rm = 0.5 * (m + p.b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = simpson(p.a, m, p.fa, flm, p.fm);
    const double right = simpson(m, p.b, p.fm, frm, p.fb);
    const double delta = left + right - p.whole;
    if (std::abs(delta) <= 15.0 * p.tol || m == p.a || m == p.b) {
      // Kahan summation keeps the accumulated rounding below the tolerance.
      const double y = left + right + delta / 15.0 - compensation;
      const double t = total + y;
      compensation = (t - total) - y;
      total = t;
      --live;
      continue;
    }
    live += 1;
    if (live > opts.max_intervals) {
      throw QuadratureError("adaptive Simpson did not converge on [" + std::to_string(a) +
                            ", " + std::to_string(b) + "] within " +
                            std::to_string(opts.max_intervals) + " intervals");
    }
    stack.push_back({m, p.b, p.fm, frm, p.fb, right, 0.5 * p.tol});
    stack.push_back({p.a, m, p.fa, flm, p.fm, left, 0.5 * p.tol});
  }
  return total;
}

}  // namespace mtpinn
