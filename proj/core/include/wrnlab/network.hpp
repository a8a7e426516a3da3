#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wrnlab/arch.hpp"
#include "wrnlab/ops.hpp"
#include "wrnlab/tape.hpp"
#include "wrnlab/tensor.hpp"

namespace wrnlab {

enum class Mode { Train, Eval };
enum class GradTarget { None, Params, Input, Both };
enum class ParamRole { ConvWeight, LinearWeight, LinearBias, BnScale, BnShift };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

template <typename T>
struct Parameter {
  std::string name;
  ParamRole role = ParamRole::ConvWeight;
  BasicTensor<T> value;

  // Coupled weight decay applies to conv and linear weights only.
  bool decays() const { return role == ParamRole::ConvWeight || role == ParamRole::LinearWeight; }
};

template <typename T>
struct BatchNormState {
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
};

// One node of the layer graph. Node 0 is the network input; layer i
// produces node i + 1.
struct Layer {
  LayerKind kind = LayerKind::Conv;
  std::string name;
  std::vector<int> inputs;  // node ids
  int stride = 1;
  int padding = 0;
  std::vector<std::size_t> params;  // weight first, then bias / scale, shift
  int bn_state = -1;
  Shape in_shape;   // per-sample shape of the first input
  Shape out_shape;  // per-sample
  LayerShape shape;
};

// A residual block: output node plus the conv layers that make up its
// residual branch and (if any) the projection shortcut.
struct BlockInfo {
  int stage = 0;  // 1-based
  int index = 0;  // 1-based within the stage
  int output_node = 0;
  std::vector<int> branch_convs;  // layer indices
  int shortcut_conv = -1;         // layer index, -1 for identity
};

template <typename T>
class Network {
 public:
  // A layout-only network records parameter shapes without allocating
  // their values; it supports shape queries and parameter counting only.
  Network(Shape input_shape, int num_classes, bool layout_only = false);

  bool layout_only() const noexcept { return layout_only_; }
  const Shape& parameter_shape(std::size_t index) const { return param_shapes_.at(index); }

  int input_node() const noexcept { return 0; }
  int add_conv(int from, int out_channels, int kernel, int stride, int padding, const std::string& name);
  int add_batch_norm(int from, const std::string& name);
  int add_relu(int from, const std::string& name);
  int add_sum(int a, int b, const std::string& name);
  int add_avg_pool(int from, const std::string& name);
  int add_flatten(int from, const std::string& name);
  int add_linear(int from, int out_features, bool bias, const std::string& name);
  void add_block(BlockInfo info) { blocks_.push_back(std::move(info)); }

  // Output is the last node unless set explicitly.
  int output_node() const noexcept { return static_cast<int>(layers_.size()); }

  const Shape& input_shape() const noexcept { return input_shape_; }
  int num_classes() const noexcept { return num_classes_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  const std::vector<BlockInfo>& blocks() const noexcept { return blocks_; }
  const Shape& node_shape(int node) const;

  std::vector<Parameter<T>>& parameters() noexcept { return params_; }
  const std::vector<Parameter<T>>& parameters() const noexcept { return params_; }
  Parameter<T>& parameter(const std::string& name);
  const Parameter<T>& parameter(const std::string& name) const;
  std::int64_t parameter_count() const;

  std::vector<BatchNormState<T>>& batch_norm_states() noexcept { return bn_states_; }
  const std::vector<BatchNormState<T>>& batch_norm_states() const noexcept { return bn_states_; }
  bool has_batch_norm() const noexcept { return !bn_states_.empty(); }

  const std::optional<ArchSpec>& spec() const noexcept { return spec_; }
  void set_spec(ArchSpec spec) { spec_ = std::move(spec); }

  template <typename U>
  Network<U> cast() const;

 private:
  template <typename>
  friend class Network;

  int push(Layer layer);
  std::size_t add_param(std::string name, ParamRole role, Shape shape);
  void check_node(int node, const char* op) const;

  Shape input_shape_;
  int num_classes_ = 0;
  std::vector<Layer> layers_;
  std::vector<Parameter<T>> params_;
  std::vector<Shape> param_shapes_;
  bool layout_only_ = false;
  std::map<std::string, std::size_t> param_index_;
  std::vector<BatchNormState<T>> bn_states_;
  std::vector<BlockInfo> blocks_;
  std::optional<ArchSpec> spec_;
};

// Result of one forward pass: the recorded tape, the tape node of every
// network node, and of every parameter.
template <typename T>
struct ForwardPass {
  Tape<T> tape;
  std::vector<NodeId> nodes;
  std::vector<NodeId> params;
  NodeId logits = 0;

  NodeId input() const { return nodes.front(); }
  const BasicTensor<T>& output() const { return tape.value(logits); }
  const BasicTensor<T>& node_value(int node) const { return tape.value(nodes.at(static_cast<std::size_t>(node))); }
};

// Train mode uses batch statistics and updates the running averages; eval
// mode is deterministic and leaves the network untouched.
template <typename T>
ForwardPass<T> forward_network(Network<T>& net, const BasicTensor<T>& x, Mode mode,
                               GradTarget wrt = GradTarget::None);
template <typename T>
ForwardPass<T> forward_network(const Network<T>& net, const BasicTensor<T>& x, GradTarget wrt = GradTarget::None);

// Logits only, eval mode.
template <typename T>
BasicTensor<T> predict_logits(const Network<T>& net, const BasicTensor<T>& x);

// Evaluates one layer on a batch whose per-sample shape must equal the
// layer's declared input shape. Residual adds take `input` as both operands.
template <typename T>
BasicTensor<T> forward_layer(Network<T>& net, std::size_t layer, const BasicTensor<T>& input, Mode mode);

template <typename T>
struct GradientMap {
  std::map<std::string, BasicTensor<T>> params;
  std::optional<BasicTensor<T>> input;
};

// Backpropagates from a scalar loss node recorded on the pass's tape.
template <typename T>
GradientMap<T> gradients(ForwardPass<T>& pass, const Network<T>& net, NodeId loss, GradTarget wrt);

}  // namespace wrnlab
