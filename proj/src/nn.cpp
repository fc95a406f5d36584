#include "touchloc/nn.hpp"

namespace touchloc::nn {

namespace {

template <typename T>
void mask_to_tensor_impl(const ContactMask& mask, Tensor<T>& out) {
  out.resize(1, mask.height(), mask.width());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      out.v[static_cast<size_t>(y) * mask.width() + x] =
          mask.get(x, y) ? T(1) : T(0);
    }
  }
}

}  // namespace

void mask_to_tensor(const ContactMask& mask, Tensor<float>& out) {
  mask_to_tensor_impl(mask, out);
}
void mask_to_tensor(const ContactMask& mask, Tensor<double>& out) {
  mask_to_tensor_impl(mask, out);
}

}  // namespace touchloc::nn
