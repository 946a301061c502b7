#pragma once

#include "hdpde/autodiff/tape.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace hdpde::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

enum class Activation { Tanh, Sin };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Shape of a fully connected network u(t, x). When time_input is set the raw
/// input is [t; x], with t mapped affinely from [0, horizon] to [-1, 1];
/// x is standardized as (x - input_center) / input_scale.
struct MlpSpec {
  int spatial_dim = 1;
  bool time_input = true;
  std::vector<int> hidden_widths = {64, 64, 64, 64};
  Activation activation = Activation::Tanh;
  int output_dim = 1;
  double horizon = 1.0;
  double input_center = 0.0;
  double input_scale = 1.0;

  int input_dim() const { return spatial_dim + (time_input ? 1 : 0); }
  void validate() const;
};

/// Parameters are stored as W0, b0, W1, b1, ... with W_k of shape
/// (fan_out x fan_in) and b_k a column.
struct NetworkState {
  MlpSpec spec;
  std::uint64_t seed = 0;
  std::vector<Matrix> params;

  std::size_t layer_count() const { return params.size() / 2; }
  Eigen::Index parameter_count() const;
};

/// Glorot-uniform weights, zero biases.
NetworkState initialize(const MlpSpec& spec, std::uint64_t seed);

/// Raw network input [t; x] for a batch (x is d x B, t is 1 x B).
Matrix pack_input(const MlpSpec& spec, const RowVector& t, const Matrix& x);

/// Batched evaluation on a raw input (input_dim x B); output_dim x B.
Matrix evaluate_raw(const NetworkState& net, const Matrix& raw);
Matrix evaluate_batch(const NetworkState& net, const RowVector& t, const Matrix& x);
Matrix evaluate_batch(const NetworkState& net, double t, const Matrix& x);
double evaluate(const NetworkState& net, double t, const Vector& x);

/// Network parameters placed on a tape.
struct BoundNetwork {
  const NetworkState* state = nullptr;
  std::vector<ad::Var> params;
};

BoundNetwork bind(ad::Tape& tape, const NetworkState& net, bool trainable);

/// Recorded forward pass on a raw input node (input_dim x B).
ad::Var forward(const BoundNetwork& net, ad::Var raw_input);

/// Forward jet of the network along per-sample input directions.
/// `directions` is input_dim x (K B): column k B + b is direction k for sample b
/// (raw input coordinates). Only the first `second_order` blocks carry second
/// derivatives.
struct Jet {
  ad::Var value;   // output_dim x B
  ad::Var first;   // output_dim x (K B), d/ds u(z + s v)
  ad::Var second;  // output_dim x (second_order B), d^2/ds^2 u(z + s v); invalid when 0
};

Jet forward_jet(const BoundNetwork& net, ad::Var raw_input, const Matrix& directions,
                int second_order);

/// Gradient of the first output with respect to the raw input: time slot
/// first (when present), then the d spatial slots.
Vector input_gradient(const NetworkState& net, double t, const Vector& x);

/// Spatial Hessian rows of the first output, computed as Hessian-vector
/// products with basis directions.
std::map<int, Vector> hessian_rows(const NetworkState& net, double t,
                                   const Vector& x, const std::vector<int>& indices);

/// Flat float64 parameter dump plus a JSON sidecar with the spec and seed.
void save_checkpoint(const NetworkState& net, const std::filesystem::path& stem);
NetworkState load_checkpoint(const std::filesystem::path& stem);

}  // namespace hdpde::nn
