#pragma once

// Feedforward network description, canonical JSON weight format, conv
// lowering and plain (uncertified) point evaluation.

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <type_traits>
#include <variant>
#include <vector>

#include <json.hpp>

#include "certiprop/errors.hpp"
#include "certiprop/linalg.hpp"

namespace certiprop {

using json = nlohmann::json;

struct DenseLayer {
  Matrix W;
  Vector b;
};

// Kernel layout [out_c][in_c][kh][kw]; activations are flattened in HWC order.
struct Conv2DLayer {
  std::vector<double> kernel;
  std::vector<double> bias;
  int out_channels = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  int stride = 1;
  int padding = 0;
  int in_h = 0;
  int in_w = 0;
  int in_c = 0;

  int out_h() const { return (in_h + 2 * padding - kernel_h) / stride + 1; }
  int out_w() const { return (in_w + 2 * padding - kernel_w) / stride + 1; }
  double k(int oc, int ic, int ky, int kx) const {
    return kernel[((static_cast<std::size_t>(oc) * in_c + ic) * kernel_h + ky) * kernel_w + kx];
  }
};

struct ReluLayer {};
struct SoftmaxLayer {};

using LayerSpec = std::variant<DenseLayer, Conv2DLayer, ReluLayer, SoftmaxLayer>;

inline std::size_t layer_in_dim(const LayerSpec& layer, std::size_t incoming) {
  if (auto d = std::get_if<DenseLayer>(&layer)) return static_cast<std::size_t>(d->W.cols());
  if (auto c = std::get_if<Conv2DLayer>(&layer)) return static_cast<std::size_t>(c->in_h) * c->in_w * c->in_c;
  return incoming;
}

inline std::size_t layer_out_dim(const LayerSpec& layer, std::size_t incoming) {
  if (auto d = std::get_if<DenseLayer>(&layer)) return static_cast<std::size_t>(d->W.rows());
  if (auto c = std::get_if<Conv2DLayer>(&layer))
    return static_cast<std::size_t>(c->out_h()) * c->out_w() * c->out_channels;
  return incoming;
}

inline void validate_conv(const Conv2DLayer& c) {
  if (c.in_h <= 0 || c.in_w <= 0 || c.in_c <= 0 || c.out_channels <= 0 || c.kernel_h <= 0 || c.kernel_w <= 0)
    throw ValidationError("conv2d: non-positive shape");
  if (c.stride < 1 || c.padding < 0) throw ValidationError("conv2d: unsupported stride/padding");
  if (c.padding >= c.kernel_h || c.padding >= c.kernel_w)
    throw ValidationError("conv2d: unsupported padding (must be smaller than the kernel)");
  if (c.in_h + 2 * c.padding < c.kernel_h || c.in_w + 2 * c.padding < c.kernel_w)
    throw ValidationError("conv2d: kernel larger than padded input");
  const std::size_t expect = static_cast<std::size_t>(c.out_channels) * c.in_c * c.kernel_h * c.kernel_w;
  if (c.kernel.size() != expect) throw DimensionError("conv2d: kernel size does not match shape");
  if (c.bias.size() != static_cast<std::size_t>(c.out_channels)) throw DimensionError("conv2d: bias length");
}

class NetworkSpec {
public:
  NetworkSpec() = default;
  NetworkSpec(std::size_t input_dim, std::vector<LayerSpec> layers)
      : layers_(std::move(layers)), input_dim_(input_dim) {
    validate();
  }

  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return output_dim_; }

  bool ends_with_softmax() const {
    return !layers_.empty() && std::holds_alternative<SoftmaxLayer>(layers_.back());
  }
  bool is_linear() const {
    for (const auto& l : layers_)
      if (!std::holds_alternative<DenseLayer>(l) && !std::holds_alternative<Conv2DLayer>(l)) return false;
    return true;
  }
  bool has_conv() const {
    for (const auto& l : layers_)
      if (std::holds_alternative<Conv2DLayer>(l)) return true;
    return false;
  }

private:
  void validate() {
    if (input_dim_ == 0) throw ValidationError("input_dim must be positive");
    std::size_t dim = input_dim_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (auto d = std::get_if<DenseLayer>(&l)) {
        if (d->W.rows() != d->b.size())
          throw DimensionError("layer " + std::to_string(i) + ": W rows != b length");
        if (d->W.rows() == 0) throw DimensionError("layer " + std::to_string(i) + ": empty dense layer");
      }
      if (auto c = std::get_if<Conv2DLayer>(&l)) validate_conv(*c);
      if (std::holds_alternative<SoftmaxLayer>(l) && i + 1 != layers_.size())
        throw ValidationError("softmax must be the final layer");
      if (layer_in_dim(l, dim) != dim)
        throw DimensionError("layer " + std::to_string(i) + ": expects input dim " +
                             std::to_string(layer_in_dim(l, dim)) + ", got " + std::to_string(dim));
      dim = layer_out_dim(l, dim);
    }
    output_dim_ = dim;
  }

  std::vector<LayerSpec> layers_;
  std::size_t input_dim_ = 0;
  std::size_t output_dim_ = 0;
};

// Per-coordinate box center +- radius in input space.
struct InputRegion {
  Vector center;
  Vector radius;

  InputRegion() = default;
  InputRegion(Vector c, Vector r) : center(std::move(c)), radius(std::move(r)) {
    require_dims(center.size() == radius.size(), "region center/radius");
    for (Eigen::Index i = 0; i < radius.size(); ++i) {
      if (!(radius[i] >= 0) || !std::isfinite(radius[i])) throw ValidationError("region radius must be >= 0");
      if (!std::isfinite(center[i])) throw ValidationError("region center must be finite");
    }
  }
  static InputRegion uniform(Vector c, double eps) {
    Vector r = Vector::Constant(c.size(), eps);
    return InputRegion(std::move(c), std::move(r));
  }
  std::size_t dim() const { return static_cast<std::size_t>(center.size()); }
  IntervalVector box() const {
    return IntervalVector::from_center_radius({center.data(), dim()}, {radius.data(), dim()});
  }
};

// ---------------------------------------------------------------- JSON I/O

namespace detail {

inline double parse_real(const json& j, const char* what) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    double v = 0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v))
      throw ParseError(std::string(what) + ": not a finite decimal: '" + s + "'");
    return v;
  }
  throw ParseError(std::string(what) + ": expected a number or decimal string");
}

inline std::vector<double> parse_real_array(const json& j, const char* what) {
  if (!j.is_array()) throw ParseError(std::string(what) + ": expected an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& e : j) out.push_back(parse_real(e, what));
  return out;
}

inline Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline void flatten_nested(const json& j, int depth, std::vector<std::size_t>& shape, std::size_t level,
                           std::vector<double>& out) {
  if (level == static_cast<std::size_t>(depth)) {
    out.push_back(parse_real(j, "conv2d kernel"));
    return;
  }
  if (!j.is_array()) throw ParseError("conv2d kernel: expected nesting depth " + std::to_string(depth));
  if (shape.size() <= level) shape.push_back(j.size());
  else if (shape[level] != j.size()) throw DimensionError("conv2d kernel: ragged nesting");
  for (const auto& e : j) flatten_nested(e, depth, shape, level + 1, out);
}

inline int get_int(const json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer()) throw ParseError(std::string("expected integer for '") + key + "'");
  return j[key].get<int>();
}

// Shortest decimal that parses back to the same double.
inline std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline LayerSpec parse_layer(const json& j) {
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) throw ParseError("layer without 'type'");
  const std::string type = j["type"];
  if (type == "dense") {
    if (!j.contains("W") || !j.contains("b")) throw ParseError("dense layer needs 'W' and 'b'");
    const json& w = j["W"];
    if (!w.is_array()) throw ParseError("dense W must be a 2-D array");
    const auto rows = static_cast<Eigen::Index>(w.size());
    Eigen::Index cols = rows > 0 && w[0].is_array() ? static_cast<Eigen::Index>(w[0].size()) : 0;
    DenseLayer d;
    d.W.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      auto row = detail::parse_real_array(w[r], "dense W");
      if (static_cast<Eigen::Index>(row.size()) != cols) throw DimensionError("dense W: ragged rows");
      for (Eigen::Index c = 0; c < cols; ++c) d.W(r, c) = row[c];
    }
    d.b = detail::to_vector(detail::parse_real_array(j["b"], "dense b"));
    return d;
  }
  if (type == "conv2d") {
    Conv2DLayer c;
    if (!j.contains("kernel") || !j.contains("bias") || !j.contains("in_shape"))
      throw ParseError("conv2d layer needs 'kernel', 'bias', 'in_shape'");
    std::vector<std::size_t> shape;
    detail::flatten_nested(j["kernel"], 4, shape, 0, c.kernel);
    if (shape.size() != 4) throw ParseError("conv2d kernel must be [out_c][in_c][kh][kw]");
    c.out_channels = static_cast<int>(shape[0]);
    c.kernel_h = static_cast<int>(shape[2]);
    c.kernel_w = static_cast<int>(shape[3]);
    c.bias = detail::parse_real_array(j["bias"], "conv2d bias");
    c.stride = detail::get_int(j, "stride", 1);
    c.padding = detail::get_int(j, "padding", 0);
    const json& s = j["in_shape"];
    if (!s.is_array() || s.size() != 3) throw ParseError("conv2d in_shape must be [h,w,c]");
    c.in_h = s[0].get<int>();
    c.in_w = s[1].get<int>();
    c.in_c = s[2].get<int>();
    if (static_cast<int>(shape[1]) != c.in_c) throw DimensionError("conv2d kernel in_c does not match in_shape");
    validate_conv(c);
    return c;
  }
  if (type == "relu") return ReluLayer{};
  if (type == "softmax") return SoftmaxLayer{};
  throw ValidationError("unsupported layer type '" + type + "'");
}

inline NetworkSpec parse_network(const json& j) {
  if (!j.is_object() || !j.contains("input_dim") || !j["input_dim"].is_number_integer())
    throw ParseError("network JSON needs integer 'input_dim'");
  if (!j.contains("layers") || !j["layers"].is_array()) throw ParseError("network JSON needs 'layers' array");
  const auto n = j["input_dim"].get<long long>();
  if (n <= 0) throw ValidationError("input_dim must be positive");
  std::vector<LayerSpec> layers;
  for (const auto& l : j["layers"]) layers.push_back(parse_layer(l));
  return NetworkSpec(static_cast<std::size_t>(n), std::move(layers));
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("'" + path + "': " + e.what());
  }
}

inline NetworkSpec load_network(const std::string& path) { return parse_network(read_json_file(path)); }

inline json network_to_json(const NetworkSpec& spec) {
  using detail::shortest;
  json layers = json::array();
  for (const auto& l : spec.layers()) {
    if (auto d = std::get_if<DenseLayer>(&l)) {
      json w = json::array();
      for (Eigen::Index r = 0; r < d->W.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < d->W.cols(); ++c) row.push_back(shortest(d->W(r, c)));
        w.push_back(std::move(row));
      }
      json b = json::array();
      for (Eigen::Index r = 0; r < d->b.size(); ++r) b.push_back(shortest(d->b[r]));
      layers.push_back({{"type", "dense"}, {"W", std::move(w)}, {"b", std::move(b)}});
    } else if (auto c = std::get_if<Conv2DLayer>(&l)) {
      json k = json::array();
      for (int oc = 0; oc < c->out_channels; ++oc) {
        json a = json::array();
        for (int ic = 0; ic < c->in_c; ++ic) {
          json b = json::array();
          for (int ky = 0; ky < c->kernel_h; ++ky) {
            json row = json::array();
            for (int kx = 0; kx < c->kernel_w; ++kx) row.push_back(shortest(c->k(oc, ic, ky, kx)));
            b.push_back(std::move(row));
          }
          a.push_back(std::move(b));
        }
        k.push_back(std::move(a));
      }
      json bias = json::array();
      for (double v : c->bias) bias.push_back(shortest(v));
      layers.push_back({{"type", "conv2d"},
                        {"kernel", std::move(k)},
                        {"bias", std::move(bias)},
                        {"stride", c->stride},
                        {"padding", c->padding},
                        {"in_shape", {c->in_h, c->in_w, c->in_c}}});
    } else if (std::holds_alternative<ReluLayer>(l)) {
      layers.push_back({{"type", "relu"}});
    } else {
      layers.push_back({{"type", "softmax"}});
    }
  }
  return {{"input_dim", spec.input_dim()}, {"layers", std::move(layers)}};
}

inline void save_network(const NetworkSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << network_to_json(spec).dump() << '\n';
}

// Region file: {"center":[...], "eps": e} or {"center":[...], "radius":[...]}.
// A non-negative eps_override replaces whatever radius the file specifies.
inline InputRegion parse_region(const json& j, double eps_override = -1.0) {
  if (!j.is_object() || !j.contains("center")) throw ParseError("region JSON needs 'center'");
  Vector c = detail::to_vector(detail::parse_real_array(j["center"], "center"));
  if (eps_override >= 0) return InputRegion::uniform(std::move(c), eps_override);
  if (j.contains("radius")) {
    Vector r = detail::to_vector(detail::parse_real_array(j["radius"], "radius"));
    return InputRegion(std::move(c), std::move(r));
  }
  if (j.contains("eps")) return InputRegion::uniform(std::move(c), detail::parse_real(j["eps"], "eps"));
  throw ValidationError("region needs 'eps' or 'radius' (or pass --eps)");
}

inline InputRegion load_region(const std::string& path, double eps_override = -1.0) {
  return parse_region(read_json_file(path), eps_override);
}

// ---------------------------------------------------------------- lowering

inline DenseLayer conv_to_dense(const Conv2DLayer& c) {
  validate_conv(c);
  const int oh = c.out_h();
  const int ow = c.out_w();
  const Eigen::Index in_dim = static_cast<Eigen::Index>(c.in_h) * c.in_w * c.in_c;
  const Eigen::Index out_dim = static_cast<Eigen::Index>(oh) * ow * c.out_channels;
  DenseLayer d;
  d.W = Matrix::Zero(out_dim, in_dim);
  d.b.resize(out_dim);
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox)
      for (int oc = 0; oc < c.out_channels; ++oc) {
        const Eigen::Index row = (static_cast<Eigen::Index>(oy) * ow + ox) * c.out_channels + oc;
        d.b[row] = c.bias[oc];
        for (int ky = 0; ky < c.kernel_h; ++ky)
          for (int kx = 0; kx < c.kernel_w; ++kx) {
            const int iy = oy * c.stride + ky - c.padding;
            const int ix = ox * c.stride + kx - c.padding;
            if (iy < 0 || iy >= c.in_h || ix < 0 || ix >= c.in_w) continue;
            for (int ic = 0; ic < c.in_c; ++ic) {
              const Eigen::Index col = (static_cast<Eigen::Index>(iy) * c.in_w + ix) * c.in_c + ic;
              d.W(row, col) += c.k(oc, ic, ky, kx);
            }
          }
      }
  return d;
}

inline NetworkSpec lower_conv(const NetworkSpec& spec) {
  std::vector<LayerSpec> layers;
  layers.reserve(spec.layers().size());
  for (const auto& l : spec.layers()) {
    if (auto c = std::get_if<Conv2DLayer>(&l)) layers.emplace_back(conv_to_dense(*c));
    else layers.push_back(l);
  }
  return NetworkSpec(spec.input_dim(), std::move(layers));
}

// ---------------------------------------------------------------- point eval

// Plain forward pass in T (double, long double, or an exact rational type for
// networks without softmax). Not certified.
template <typename T>
std::vector<T> eval_point(const NetworkSpec& spec, const std::vector<T>& x) {
  require_dims(x.size() == spec.input_dim(), "eval_point input");
  std::vector<T> cur = x;
  for (const auto& l : spec.layers()) {
    if (auto d = std::get_if<DenseLayer>(&l)) {
      std::vector<T> next(static_cast<std::size_t>(d->W.rows()));
      for (Eigen::Index r = 0; r < d->W.rows(); ++r) {
        T acc = static_cast<T>(d->b[r]);
        for (Eigen::Index c = 0; c < d->W.cols(); ++c) acc += static_cast<T>(d->W(r, c)) * cur[c];
        next[r] = acc;
      }
      cur = std::move(next);
    } else if (auto c = std::get_if<Conv2DLayer>(&l)) {
      const int oh = c->out_h();
      const int ow = c->out_w();
      std::vector<T> next(static_cast<std::size_t>(oh) * ow * c->out_channels);
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
          for (int oc = 0; oc < c->out_channels; ++oc) {
            T acc = static_cast<T>(c->bias[oc]);
            for (int ky = 0; ky < c->kernel_h; ++ky)
              for (int kx = 0; kx < c->kernel_w; ++kx) {
                const int iy = oy * c->stride + ky - c->padding;
                const int ix = ox * c->stride + kx - c->padding;
                if (iy < 0 || iy >= c->in_h || ix < 0 || ix >= c->in_w) continue;
                for (int ic = 0; ic < c->in_c; ++ic)
                  acc += static_cast<T>(c->k(oc, ic, ky, kx)) *
                         cur[(static_cast<std::size_t>(iy) * c->in_w + ix) * c->in_c + ic];
              }
            next[(static_cast<std::size_t>(oy) * ow + ox) * c->out_channels + oc] = acc;
          }
      cur = std::move(next);
    } else if (std::holds_alternative<ReluLayer>(l)) {
      for (auto& v : cur)
        if (v < T(0)) v = T(0);
    } else {
      if constexpr (std::is_floating_point_v<T>) {
        T mx = cur[0];
        for (const auto& v : cur) mx = std::max(mx, v);
        T sum = 0;
        for (auto& v : cur) {
          v = std::exp(v - mx);
          sum += v;
        }
        for (auto& v : cur) v /= sum;
      } else {
        throw ValidationError("softmax needs a floating-point evaluation type");
      }
    }
  }
  return cur;
}

inline Vector eval_point(const NetworkSpec& spec, const Vector& x) {
  std::vector<double> v(x.data(), x.data() + x.size());
  return detail::to_vector(eval_point<double>(spec, v));
}

inline std::size_t argmax(const Vector& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return static_cast<std::size_t>(i);
}

// Output dimension seen by propagation with or without the final softmax.
inline NetworkSpec strip_softmax(const NetworkSpec& spec) {
  if (!spec.ends_with_softmax()) return spec;
  std::vector<LayerSpec> layers(spec.layers().begin(), spec.layers().end() - 1);
  return NetworkSpec(spec.input_dim(), std::move(layers));
}

}  // namespace certiprop
