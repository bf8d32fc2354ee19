#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hywu {

using Shape = std::vector<std::size_t>;

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major 64-bit tensor. `node >= 0` ties the value to a Tape node;
// node == -1 marks a constant that never accumulates a gradient.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  int node = -1;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> d);

  std::size_t size() const { return data.size(); }
  bool requires_grad() const { return node >= 0; }
  std::size_t rank() const { return shape.size(); }

  static Tensor zeros(Shape s);
  static Tensor full(Shape s, double v);
  static Tensor scalar(double v);
};

// Reverse-mode tape. Operations that see at least one tape-bound input record
// a node; backward replays nodes in reverse creation order (a topological
// order by construction) and sums gradients over all uses.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a leaf that will receive a gradient.
  Tensor watch(Tensor t);

  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double s);
  Tensor add_scalar(const Tensor& a, double s);
  Tensor gelu(const Tensor& a);
  Tensor tanh(const Tensor& a);
  Tensor softmax_rows(const Tensor& a);
  Tensor reshape(const Tensor& a, Shape new_shape);
  Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);
  // out[i] = a[idx[i]]; backward scatter-adds through the index map.
  Tensor gather(const Tensor& a, const std::vector<std::size_t>& idx, Shape out_shape);
  // Pairwise rotation: for each even offset i, (y_i, y_{i+1}) is
  // (x_i, x_{i+1}) rotated by the angle whose cos/sin are given elementwise.
  // cos/sin have one entry per pair and must cover the whole tensor.
  Tensor rope(const Tensor& a, const std::vector<double>& cos_v,
              const std::vector<double>& sin_v);
  // RMS normalization over the last axis with a learnable gain of that width.
  Tensor rms_norm(const Tensor& a, const Tensor& gain, double eps = 1e-8);
  Tensor sum(const Tensor& a);
  // Adds a vector of the last-axis width to every row.
  Tensor add_rows(const Tensor& a, const Tensor& bias);
  // Flattens every input and joins them into one 1-D tensor.
  Tensor concat(const std::vector<Tensor>& parts);
  // a: [..., m, k]; b: [k, n] shared or [..., k, n] with matching batch dims.
  Tensor matmul(const Tensor& a, const Tensor& b);

  // loss must be scalar. A second backward on the same tape is forbidden.
  void backward(const Tensor& loss);

  // Total derivative for a watched/intermediate tensor; zeros if unreached.
  std::vector<double> grad(const Tensor& t) const;

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    std::size_t size = 0;
    // Receives the upstream gradient of this node's output.
    std::function<void(Tape&, const std::vector<double>&)> back;
  };

  int record(std::size_t out_size,
             std::function<void(Tape&, const std::vector<double>&)> back);
  bool recording(const Tensor& a) const { return a.node >= 0; }
  std::vector<double>& grad_buf(int node);

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool backward_done_ = false;
};

}  // namespace hywu
