#pragma once

// 2-D complex DFT on column-major Eigen matrices, backed by FFTW.
// Forward transform is unnormalised; the inverse carries the 1/(rows*cols).

#include <fftw3.h>

#include <Eigen/Dense>

#include <complex>
#include <mutex>

#include "wpp/error.hpp"

namespace wpp::fft {

using ComplexMatrix = Eigen::MatrixXcd;

namespace detail {

// FFTW planning is not thread-safe; execution on distinct arrays is.
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class Plan {
 public:
  Plan(ComplexMatrix& in, ComplexMatrix& out, int sign) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    // Column-major rows x cols is row-major cols x rows; the 2-D DFT commutes
    // with transposition, so planning the swapped shape is exact.
    plan_ = fftw_plan_dft_2d(static_cast<int>(in.cols()), static_cast<int>(in.rows()),
                             reinterpret_cast<fftw_complex*>(in.data()),
                             reinterpret_cast<fftw_complex*>(out.data()), sign, FFTW_ESTIMATE);
    if (!plan_) throw Error("internal", "fftw planning failed");
  }
  ~Plan() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;

  void execute() const { fftw_execute(plan_); }

 private:
  fftw_plan plan_ = nullptr;
};

inline ComplexMatrix transform(ComplexMatrix in, int sign) {
  ComplexMatrix out(in.rows(), in.cols());
  Plan plan(in, out, sign);
  plan.execute();
  return out;
}

}  // namespace detail

inline ComplexMatrix forward(const ComplexMatrix& x) { return detail::transform(x, FFTW_FORWARD); }

inline ComplexMatrix forward(const Eigen::MatrixXd& x) {
  return detail::transform(x.cast<std::complex<double>>(), FFTW_FORWARD);
}

inline ComplexMatrix inverse(const ComplexMatrix& x) {
  ComplexMatrix out = detail::transform(x, FFTW_BACKWARD);
  out /= static_cast<double>(x.size());
  return out;
}

}  // namespace wpp::fft
