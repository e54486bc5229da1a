#include "wsnn/kernels/kernels.hpp"

// Scalar lane of the float dispatch table: thin wrappers over the reference
// templates so that "kernels = scalar" runs the exact reference semantics.

namespace wsnn::kernels {

const FloatKernels& scalar_table() {
  static const FloatKernels t = {
      &ref::gemm_nn<float>, &ref::gemm_nt<float>,  &ref::gemm_tn<float>,
      &ref::add<float>,     &ref::sub<float>,      &ref::mul<float>,
      &ref::axpy<float>,    &ref::scale<float>,    &ref::relu_fwd<float>,
      &ref::relu_bwd<float>, &ref::sum<float>,     &ref::dot<float>,
      &ref::has_nonfinite<float>, &ref::adam_step<float>, &ref::sgd_step<float>,
  };
  return t;
}

}  // namespace wsnn::kernels
