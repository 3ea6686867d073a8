#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

namespace amod {

// Savitzky-Golay filter for one scalar channel. Interior samples are the
// least-squares polynomial fit of the centered window evaluated at the
// center; the first and last half-windows are taken from the polynomial
// fitted to the first/last full window, so polynomials of degree <= order
// are reproduced exactly over the whole sequence.
class SavgolFilter {
 public:
  SavgolFilter(int window, int poly_order) : window_(window), order_(poly_order) {
    if (poly_order < 0) throw std::invalid_argument("savgol: poly_order must be >= 0");
    if (window % 2 == 0 || window <= poly_order)
      throw std::invalid_argument("savgol: window must be odd and > poly_order");
    const int h = window / 2;
    Eigen::MatrixXd v(window, poly_order + 1);
    for (int i = 0; i < window; ++i) {
      double t = 1.0;
      for (int j = 0; j <= poly_order; ++j) {
        v(i, j) = t;
        t *= static_cast<double>(i - h);
      }
    }
    solver_ = v.colPivHouseholderQr();
    // Row of the pseudo-inverse picking the fitted value at the center.
    Eigen::MatrixXd pinv = (v.transpose() * v).ldlt().solve(v.transpose());
    center_weights_ = pinv.row(0);
  }

  int window() const { return window_; }
  int poly_order() const { return order_; }

  // x.size() must be >= window.
  std::vector<double> apply(const std::vector<double>& x) const {
    const int n = static_cast<int>(x.size());
    if (n < window_) throw std::invalid_argument("savgol: sequence shorter than window");
    const int h = window_ / 2;
    std::vector<double> out(x.size());
    for (int i = h; i < n - h; ++i) {
      double acc = 0.0;
      for (int k = 0; k < window_; ++k) acc += center_weights_[k] * x[i - h + k];
      out[i] = acc;
    }
    auto head = fit_window(x, 0);
    for (int i = 0; i < h; ++i) out[i] = eval_poly(head, i - h);
    auto tail = fit_window(x, n - window_);
    for (int i = n - h; i < n; ++i) out[i] = eval_poly(tail, i - (n - 1 - h));
    return out;
  }

 private:
  Eigen::VectorXd fit_window(const std::vector<double>& x, int start) const {
    Eigen::VectorXd b(window_);
    for (int i = 0; i < window_; ++i) b[i] = x[start + i];
    return solver_.solve(b);
  }

  double eval_poly(const Eigen::VectorXd& coef, int t) const {
    double acc = 0.0, tt = 1.0;
    for (int j = 0; j < coef.size(); ++j) {
      acc += coef[j] * tt;
      tt *= static_cast<double>(t);
    }
    return acc;
  }

  int window_;
  int order_;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> solver_;
  Eigen::RowVectorXd center_weights_;
};

inline std::vector<double> savgol_smooth(const std::vector<double>& x, int window,
                                         int poly_order) {
  return SavgolFilter(window, poly_order).apply(x);
}

}  // namespace amod
