#include "hdpde/network/mlp.hpp"

#include "hdpde/sde/noise.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace hdpde::nn {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Sin: return "sin";
  }
  return "tanh";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "sin") return Activation::Sin;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

void MlpSpec::validate() const {
  if (spatial_dim < 1) throw std::invalid_argument("MlpSpec: spatial_dim must be >= 1");
  if (hidden_widths.empty())
    throw std::invalid_argument("MlpSpec: at least one hidden layer is required");
  for (int w : hidden_widths)
    if (w < 1) throw std::invalid_argument("MlpSpec: hidden widths must be positive");
  if (output_dim < 1) throw std::invalid_argument("MlpSpec: output_dim must be positive");
  if (!(horizon > 0.0)) throw std::invalid_argument("MlpSpec: horizon must be positive");
  if (!(input_scale > 0.0)) throw std::invalid_argument("MlpSpec: input_scale must be positive");
}

Eigen::Index NetworkState::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& p : params) n += p.size();
  return n;
}

NetworkState initialize(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  NetworkState net;
  net.spec = spec;
  net.seed = seed;
  sde::NoiseSource noise(seed, 0x1a11);
  std::vector<int> widths;
  widths.push_back(spec.input_dim());
  widths.insert(widths.end(), spec.hidden_widths.begin(), spec.hidden_widths.end());
  widths.push_back(spec.output_dim);
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const int fan_in = widths[k];
    const int fan_out = widths[k + 1];
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    Matrix w = noise.next_uniform_matrix(fan_out, fan_in);
    w = (2.0 * w.array() - 1.0) * a;
    net.params.push_back(std::move(w));
    net.params.push_back(Matrix::Zero(fan_out, 1));
  }
  return net;
}

Matrix pack_input(const MlpSpec& spec, const RowVector& t, const Matrix& x) {
  if (x.rows() != spec.spatial_dim)
    throw ad::ShapeError("pack_input: expected " + std::to_string(spec.spatial_dim) +
                         " spatial rows, got " + std::to_string(x.rows()));
  if (!spec.time_input) return x;
  if (t.size() != x.cols()) throw ad::ShapeError("pack_input: t and x batch sizes differ");
  Matrix raw(spec.input_dim(), x.cols());
  raw.row(0) = t;
  raw.bottomRows(spec.spatial_dim) = x;
  return raw;
}

namespace {

// Per-row affine map taking the raw input to the normalized network input.
void input_affine(const MlpSpec& spec, Vector& scale, Vector& offset) {
  scale.resize(spec.input_dim());
  offset.resize(spec.input_dim());
  int r = 0;
  if (spec.time_input) {
    scale(0) = 2.0 / spec.horizon;
    offset(0) = -1.0;
    r = 1;
  }
  for (int i = 0; i < spec.spatial_dim; ++i, ++r) {
    scale(r) = 1.0 / spec.input_scale;
    offset(r) = -spec.input_center / spec.input_scale;
  }
}

}  // namespace

Matrix evaluate_raw(const NetworkState& net, const Matrix& raw) {
  const MlpSpec& spec = net.spec;
  if (raw.rows() != spec.input_dim())
    throw ad::ShapeError("evaluate: expected " + std::to_string(spec.input_dim()) +
                         " input rows, got " + std::to_string(raw.rows()));
  Vector s, o;
  input_affine(spec, s, o);
  Matrix h = (s.asDiagonal() * raw).colwise() + o;
  const std::size_t layers = net.layer_count();
  for (std::size_t k = 0; k < layers; ++k) {
    Matrix z = (net.params[2 * k] * h).colwise() + net.params[2 * k + 1].col(0);
    if (k + 1 < layers) {
      if (spec.activation == Activation::Tanh) h = z.array().tanh();
      else h = z.array().sin();
    } else {
      h = std::move(z);
    }
  }
  return h;
}

Matrix evaluate_batch(const NetworkState& net, const RowVector& t, const Matrix& x) {
  return evaluate_raw(net, pack_input(net.spec, t, x));
}

Matrix evaluate_batch(const NetworkState& net, double t, const Matrix& x) {
  return evaluate_batch(net, RowVector::Constant(x.cols(), t), x);
}

double evaluate(const NetworkState& net, double t, const Vector& x) {
  return evaluate_batch(net, t, Matrix(x))(0, 0);
}

BoundNetwork bind(ad::Tape& tape, const NetworkState& net, bool trainable) {
  BoundNetwork b;
  b.state = &net;
  b.params.reserve(net.params.size());
  for (const auto& p : net.params)
    b.params.push_back(trainable ? tape.variable(p) : tape.constant(p));
  return b;
}

ad::Var forward(const BoundNetwork& net, ad::Var raw_input) {
  const MlpSpec& spec = net.state->spec;
  if (raw_input.rows() != spec.input_dim())
    throw ad::ShapeError("forward: expected " + std::to_string(spec.input_dim()) +
                         " input rows, got " + std::to_string(raw_input.rows()));
  ad::Tape& tape = raw_input.tape();
  Vector s, o;
  input_affine(spec, s, o);
  const Eigen::Index batch = raw_input.cols();
  ad::Var h = raw_input * tape.constant(s.replicate(1, batch));
  h = ad::add_col_broadcast(h, tape.constant(o));
  const std::size_t layers = net.params.size() / 2;
  for (std::size_t k = 0; k < layers; ++k) {
    ad::Var z = ad::add_col_broadcast(ad::matmul(net.params[2 * k], h),
                                      net.params[2 * k + 1]);
    if (k + 1 < layers) {
      h = spec.activation == Activation::Tanh ? ad::tanh(z) : ad::sin(z);
    } else {
      h = z;
    }
  }
  return h;
}

namespace {

ad::TapeFunction first_output(const NetworkState& net) {
  return [&net](ad::Tape& tape, ad::Var raw) {
    BoundNetwork b = bind(tape, net, false);
    ad::Var y = forward(b, raw);
    if (y.rows() > 1) y = ad::row_block(y, 0, 1);
    return ad::sum(y);
  };
}

Matrix raw_point(const NetworkState& net, double t, const Vector& x) {
  return pack_input(net.spec, RowVector::Constant(1, t), Matrix(x));
}

}  // namespace

Jet forward_jet(const BoundNetwork& net, ad::Var raw_input, const Matrix& directions,
                int second_order) {
  const MlpSpec& spec = net.state->spec;
  const Eigen::Index batch = raw_input.cols();
  if (raw_input.rows() != spec.input_dim() || directions.rows() != spec.input_dim())
    throw ad::ShapeError("forward_jet: input rows do not match the network");
  if (batch == 0 || directions.cols() % batch != 0)
    throw ad::ShapeError("forward_jet: direction columns must be a multiple of the batch");
  const Eigen::Index k1 = directions.cols() / batch;
  if (k1 < 1) throw std::invalid_argument("forward_jet: need at least one direction");
  if (second_order < 0 || second_order > k1)
    throw std::invalid_argument("forward_jet: second_order exceeds the direction count");
  const Eigen::Index k2 = second_order;
  ad::Tape& tape = raw_input.tape();

  Vector s, o;
  input_affine(spec, s, o);
  ad::Var h = raw_input * tape.constant(s.replicate(1, batch));
  h = ad::add_col_broadcast(h, tape.constant(o));
  ad::Var hd = tape.constant(s.asDiagonal() * directions);
  ad::Var hdd;  // zero at the input

  const std::size_t layers = net.params.size() / 2;
  Jet jet;
  for (std::size_t k = 0; k < layers; ++k) {
    const ad::Var& w = net.params[2 * k];
    ad::Var z = ad::add_col_broadcast(ad::matmul(w, h), net.params[2 * k + 1]);
    ad::Var zd = ad::matmul(w, hd);
    ad::Var zdd = hdd.valid() ? ad::matmul(w, hdd) : ad::Var();
    if (k + 1 == layers) {
      jet.value = z;
      jet.first = zd;
      if (k2 > 0) jet.second = zdd.valid() ? zdd : tape.constant(Matrix::Zero(z.rows(), k2 * batch));
      break;
    }
    ad::Var d1, d2;
    if (spec.activation == Activation::Tanh) {
      h = ad::tanh(z);
      d1 = ad::tanh_deriv(h);
      d2 = ad::scale(h * d1, -2.0);
    } else {
      h = ad::sin(z);
      d1 = ad::cos(z);
      d2 = -h;
    }
    if (k2 > 0) {
      ad::Var curv = ad::tile_cols(d2, k2) * ad::square(ad::col_block(zd, 0, k2 * batch));
      hdd = zdd.valid() ? ad::tile_cols(d1, k2) * zdd + curv : curv;
    }
    hd = ad::tile_cols(d1, k1) * zd;
  }
  return jet;
}

Vector input_gradient(const NetworkState& net, double t, const Vector& x) {
  return ad::input_gradient(first_output(net), raw_point(net, t, x)).col(0);
}

std::map<int, Vector> hessian_rows(const NetworkState& net, double t,
                                   const Vector& x,
                                   const std::vector<int>& indices) {
  const MlpSpec& spec = net.spec;
  const int d = spec.spatial_dim;
  const int shift = spec.time_input ? 1 : 0;
  const Matrix raw = raw_point(net, t, x);

  ad::Tape tape;
  ad::Var z = tape.variable(raw);
  ad::Var y = first_output(net)(tape, z);
  const ad::Var wrt[] = {z};
  ad::Var g = ad::grad(y, wrt, true)[0];

  std::map<int, Vector> rows;
  for (int i : indices) {
    if (i < 0 || i >= d) throw std::out_of_range("hessian_rows: index out of range");
    Matrix dir = Matrix::Zero(raw.rows(), 1);
    dir(i + shift, 0) = 1.0;
    const Matrix hv = ad::hvp(z, g, dir).value();
    rows[i] = hv.col(0).tail(d);
  }
  return rows;
}

void save_checkpoint(const NetworkState& net, const std::filesystem::path& stem) {
  const MlpSpec& s = net.spec;
  nlohmann::json meta = {
      {"spatial_dim", s.spatial_dim},
      {"time_input", s.time_input},
      {"hidden_widths", s.hidden_widths},
      {"activation", to_string(s.activation)},
      {"output_dim", s.output_dim},
      {"horizon", s.horizon},
      {"input_center", s.input_center},
      {"input_scale", s.input_scale},
      {"seed", net.seed},
      {"parameter_count", net.parameter_count()},
  };
  std::filesystem::path bin = stem;
  bin += ".bin";
  std::filesystem::path side = stem;
  side += ".json";
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + bin.string());
  for (const auto& p : net.params) {
    // Column-major matches Eigen's storage; shapes follow from the spec.
    out.write(reinterpret_cast<const char*>(p.data()),
              static_cast<std::streamsize>(p.size() * sizeof(double)));
  }
  std::ofstream js(side);
  js << meta.dump(2) << "\n";
}

NetworkState load_checkpoint(const std::filesystem::path& stem) {
  std::filesystem::path bin = stem;
  bin += ".bin";
  std::filesystem::path side = stem;
  side += ".json";
  std::ifstream js(side);
  if (!js) throw std::runtime_error("cannot read " + side.string());
  const nlohmann::json meta = nlohmann::json::parse(js);
  MlpSpec s;
  s.spatial_dim = meta.at("spatial_dim");
  s.time_input = meta.at("time_input");
  s.hidden_widths = meta.at("hidden_widths").get<std::vector<int>>();
  s.activation = activation_from_string(meta.at("activation"));
  s.output_dim = meta.at("output_dim");
  s.horizon = meta.at("horizon");
  s.input_center = meta.at("input_center");
  s.input_scale = meta.at("input_scale");
  NetworkState net = initialize(s, meta.at("seed").get<std::uint64_t>());
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + bin.string());
  for (auto& p : net.params) {
    in.read(reinterpret_cast<char*>(p.data()),
            static_cast<std::streamsize>(p.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint " + bin.string() + " is truncated");
  }
  return net;
}

}  // namespace hdpde::nn
