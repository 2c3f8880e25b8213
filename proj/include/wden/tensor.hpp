#pragma once

#include <Eigen/Dense>

#include <concepts>
#include <stdexcept>
#include <string>

namespace wden {

using Index = Eigen::Index;

template <std::floating_point S>
using MatrixX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <std::floating_point S>
using RowMajorX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <std::floating_point S>
using VectorX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <std::floating_point S>
using ArrayX = Eigen::Array<S, Eigen::Dynamic, 1>;

// Rank-3 sample tensor [batch, channel, time]. Storage is a single row-major
// (batch*channels) x time matrix, so element (b,c,t) lives at ((b*C + c)*T + t)
// and row(b,c) is a contiguous time series. Shape is fixed at construction.
template <std::floating_point S>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Index batch, Index channels, Index time) : batch_(batch), channels_(channels), time_(time) {
    if (batch < 0 || channels < 0 || time < 0) throw std::invalid_argument("tensor: negative dimension");
    data_ = RowMajorX<S>::Zero(batch * channels, time);
  }

  // Takes ownership of a (batch*channels) x time row-major matrix.
  static Tensor wrap(RowMajorX<S> m, Index batch, Index channels) {
    if (batch * channels != m.rows()) throw std::invalid_argument("tensor: wrap row mismatch");
    Tensor t;
    t.batch_ = batch;
    t.channels_ = channels;
    t.time_ = m.cols();
    t.data_ = std::move(m);
    return t;
  }

  Index batch() const { return batch_; }
  Index channels() const { return channels_; }
  Index time() const { return time_; }
  Index size() const { return batch_ * channels_ * time_; }

  S operator()(Index b, Index c, Index t) const { return data_(b * channels_ + c, t); }
  S& operator()(Index b, Index c, Index t) { return data_(b * channels_ + c, t); }

  // channels x time view of one batch item
  auto item(Index b) { return data_.middleRows(b * channels_, channels_); }
  auto item(Index b) const { return data_.middleRows(b * channels_, channels_); }

  auto row(Index b, Index c) { return data_.row(b * channels_ + c); }
  auto row(Index b, Index c) const { return data_.row(b * channels_ + c); }

  RowMajorX<S>& raw() { return data_; }
  const RowMajorX<S>& raw() const { return data_; }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }

  bool same_shape(const Tensor& o) const {
    return batch_ == o.batch_ && channels_ == o.channels_ && time_ == o.time_;
  }

  void setZero() { data_.setZero(); }

  template <std::floating_point T2>
  Tensor<T2> cast() const {
    Tensor<T2> out(batch_, channels_, time_);
    out.raw() = data_.template cast<T2>();
    return out;
  }

 private:
  Index batch_ = 0, channels_ = 0, time_ = 0;
  RowMajorX<S> data_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace wden
