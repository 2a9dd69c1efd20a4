#pragma once

// Dense building blocks shared by the generator, the image encoder and the
// saliency code. Feature maps are channel-major: rows are channels, columns
// are row-major spatial positions.

#include <cmath>

#include "vistext/image.hpp"
#include "vistext/params.hpp"

namespace vistext::nn {

struct FeatureMap {
  int h = 0;
  int w = 0;
  RowMatrix x;  // channels x (h*w)
};

inline int conv_out(int n, int k, int stride, int pad) { return (n + 2 * pad - k) / stride + 1; }

inline RowMatrix im2col(const RowMatrix& in, int h, int w, int k, int stride, int pad, int ho, int wo) {
  const int c = static_cast<int>(in.rows());
  RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(c) * k * k, static_cast<Eigen::Index>(ho) * wo);
  for (int ch = 0; ch < c; ++ch)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        auto row = cols.row((static_cast<Eigen::Index>(ch) * k + ky) * k + kx);
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            row(oy * wo + ox) = in(ch, iy * w + ix);
          }
        }
      }
  return cols;
}

inline void col2im_add(const RowMatrix& cols, int c, int h, int w, int k, int stride, int pad, int ho,
                       int wo, RowMatrix& din) {
  for (int ch = 0; ch < c; ++ch)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        auto row = cols.row((static_cast<Eigen::Index>(ch) * k + ky) * k + kx);
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            din(ch, iy * w + ix) += row(oy * wo + ox);
          }
        }
      }
}

// weight: [c_out, c_in, k, k], bias: [c_out]
inline FeatureMap conv2d(const FeatureMap& in, const Param& weight, const Param& bias, int stride, int pad) {
  const int k = static_cast<int>(weight.shape[2]);
  FeatureMap out;
  out.h = conv_out(in.h, k, stride, pad);
  out.w = conv_out(in.w, k, stride, pad);
  RowMatrix cols = im2col(in.x, in.h, in.w, k, stride, pad, out.h, out.w);
  out.x.noalias() = weight.mat() * cols;
  out.x.colwise() += bias.vec();
  return out;
}

// Accumulates weight/bias gradients into `grads` (when given) and returns the
// gradient with respect to the input.
inline RowMatrix conv2d_backward(const FeatureMap& in, const Param& weight, const RowMatrix& dout,
                                 int out_h, int out_w, int stride, int pad, Param* wgrad, Param* bgrad,
                                 bool need_input_grad = true) {
  const int k = static_cast<int>(weight.shape[2]);
  RowMatrix cols = im2col(in.x, in.h, in.w, k, stride, pad, out_h, out_w);
  if (wgrad) wgrad->grad_mat().noalias() += dout * cols.transpose();
  if (bgrad) bgrad->grad_vec() += dout.rowwise().sum();
  RowMatrix din = RowMatrix::Zero(in.x.rows(), in.x.cols());
  if (need_input_grad) {
    RowMatrix dcols = weight.mat().transpose() * dout;
    col2im_add(dcols, static_cast<int>(in.x.rows()), in.h, in.w, k, stride, pad, out_h, out_w, din);
  }
  return din;
}

inline FeatureMap upsample_nearest(const FeatureMap& in, int factor) {
  FeatureMap out;
  out.h = in.h * factor;
  out.w = in.w * factor;
  out.x.resize(in.x.rows(), static_cast<Eigen::Index>(out.h) * out.w);
  for (Eigen::Index c = 0; c < in.x.rows(); ++c)
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w; ++x) out.x(c, y * out.w + x) = in.x(c, (y / factor) * in.w + x / factor);
  return out;
}

inline RowMatrix upsample_nearest_backward(const RowMatrix& dout, int in_h, int in_w, int factor) {
  const int out_w = in_w * factor;
  RowMatrix din = RowMatrix::Zero(dout.rows(), static_cast<Eigen::Index>(in_h) * in_w);
  for (Eigen::Index c = 0; c < dout.rows(); ++c)
    for (int y = 0; y < in_h * factor; ++y)
      for (int x = 0; x < out_w; ++x) din(c, (y / factor) * in_w + x / factor) += dout(c, y * out_w + x);
  return din;
}

inline RowMatrix relu(const RowMatrix& x) { return x.cwiseMax(0.0); }

inline RowMatrix relu_backward(const RowMatrix& pre, const RowMatrix& dout) {
  return RowMatrix((pre.array() > 0.0).select(dout.array(), 0.0));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// HWC image -> 3 x (h*w) map
inline FeatureMap image_to_map(const ImageTensor& img) {
  FeatureMap m;
  m.h = img.height;
  m.w = img.width;
  m.x.resize(img.channels, static_cast<Eigen::Index>(img.height) * img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) m.x(c, y * img.width + x) = img.at(y, x, c);
  return m;
}

inline ImageTensor map_to_image(const RowMatrix& x, int h, int w) {
  ImageTensor img = ImageTensor::filled(h, w, 0.0);
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx)
      for (int c = 0; c < 3; ++c) img.at(y, xx, c) = x(c, y * w + xx);
  return img;
}

// Row-wise softmax.
inline RowMatrix softmax_rows(const RowMatrix& s) {
  RowMatrix out(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    double m = s.row(i).maxCoeff();
    auto e = (s.row(i).array() - m).exp();
    out.row(i) = e / e.sum();
  }
  return out;
}

inline RowMatrix softmax_rows_backward(const RowMatrix& p, const RowMatrix& dp) {
  Eigen::VectorXd dots = (p.array() * dp.array()).rowwise().sum();
  return p.array() * (dp.colwise() - dots).array();
}

}  // namespace vistext::nn
