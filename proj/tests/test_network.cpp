#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "test_support.hpp"

using namespace certiprop;
using testing_support::Rational;

namespace {

json small_mlp_json() {
  return json::parse(R"({"input_dim": 4, "layers": [
    {"type": "dense", "W": [["1","0","0.5","-2"],["0","1","0","0"],["0.25","0","0","1e-3"]], "b": ["0.1","0","-1"]},
    {"type": "relu"},
    {"type": "dense", "W": [[1, 2, 3],[0, -1, 0.5]], "b": [0, 0]}]})");
}

Conv2DLayer random_conv(std::mt19937_64& gen, int h, int w, int c, int oc, int k, int stride, int pad) {
  Conv2DLayer conv;
  conv.in_h = h;
  conv.in_w = w;
  conv.in_c = c;
  conv.out_channels = oc;
  conv.kernel_h = conv.kernel_w = k;
  conv.stride = stride;
  conv.padding = pad;
  for (int i = 0; i < oc * c * k * k; ++i) conv.kernel.push_back(testing_support::random_double(gen, -3, 1));
  for (int i = 0; i < oc; ++i) conv.bias.push_back(testing_support::random_double(gen, -3, 1));
  return conv;
}

}  // namespace

TEST(Network, LoadsSmallMlp) {
  const NetworkSpec spec = parse_network(small_mlp_json());
  EXPECT_EQ(spec.layers().size(), 3u);
  EXPECT_EQ(spec.input_dim(), 4u);
  EXPECT_EQ(spec.output_dim(), 2u);
  const auto& d = std::get<DenseLayer>(spec.layers()[0]);
  EXPECT_EQ(d.W(0, 2), 0.5);
  EXPECT_EQ(d.W(2, 3), 1e-3);
  EXPECT_EQ(d.b[0], 0.1);
  EXPECT_TRUE(spec.is_linear() == false);
}

TEST(Network, MismatchedBiasIsDimensionError) {
  json j = small_mlp_json();
  j["layers"][0]["b"] = json::array({"0", "0"});
  EXPECT_THROW(parse_network(j), DimensionError);
}

TEST(Network, SoftmaxMidNetworkRejected) {
  json j = small_mlp_json();
  j["layers"][1] = {{"type", "softmax"}};
  EXPECT_THROW(parse_network(j), ValidationError);
}

TEST(Network, BadInputsRejected) {
  json j = small_mlp_json();
  j["layers"][1] = {{"type", "tanh"}};
  EXPECT_THROW(parse_network(j), ValidationError);
  j = small_mlp_json();
  j["layers"][0]["W"][0][0] = "one";
  EXPECT_THROW(parse_network(j), ParseError);
  j = small_mlp_json();
  j["input_dim"] = 5;
  EXPECT_THROW(parse_network(j), DimensionError);
  EXPECT_THROW(load_network("/nonexistent/net.json"), ValidationError);
}

TEST(Network, SaveLoadRoundTripIsIdentity) {
  std::mt19937_64 gen(31);
  const NetworkSpec spec = testing_support::random_network(gen, {5, 7, 3}, true, true);
  const json j1 = network_to_json(spec);
  const NetworkSpec back = parse_network(j1);
  EXPECT_EQ(network_to_json(back), j1);
  const auto& a = std::get<DenseLayer>(spec.layers()[0]);
  const auto& b = std::get<DenseLayer>(back.layers()[0]);
  EXPECT_TRUE((a.W.array() == b.W.array()).all());
  EXPECT_TRUE((a.b.array() == b.b.array()).all());

  std::vector<LayerSpec> layers{random_conv(gen, 4, 4, 2, 3, 3, 1, 1), ReluLayer{}};
  const NetworkSpec conv(32, std::move(layers));
  const auto path = std::filesystem::temp_directory_path() / "certiprop_roundtrip.json";
  save_network(conv, path.string());
  const NetworkSpec conv_back = load_network(path.string());
  EXPECT_EQ(network_to_json(conv_back), network_to_json(conv));
  std::filesystem::remove(path);
}

TEST(Network, RegionFormats) {
  InputRegion r = parse_region(json::parse(R"({"center": [1, "2.5"], "eps": 0.25})"));
  EXPECT_EQ(r.center[1], 2.5);
  EXPECT_EQ(r.radius[0], 0.25);
  r = parse_region(json::parse(R"({"center": [1, 2], "radius": [0.5, 0]})"));
  EXPECT_EQ(r.radius[0], 0.5);
  EXPECT_EQ(r.radius[1], 0.0);
  r = parse_region(json::parse(R"({"center": [1, 2], "radius": [0.5, 0]})"), 0.125);
  EXPECT_EQ(r.radius[1], 0.125);
  EXPECT_THROW(parse_region(json::parse(R"({"center": [1, 2]})")), ValidationError);
  EXPECT_THROW(parse_region(json::parse(R"({"center": [1, 2], "radius": [-1, 0]})")), ValidationError);
  EXPECT_THROW(parse_region(json::parse(R"({"center": [1, 2], "radius": [1]})")), DimensionError);
}

TEST(Network, EvalPointExamples) {
  DenseLayer id;
  id.W = Matrix::Identity(3, 3);
  id.b = Vector::Zero(3);
  const NetworkSpec ident(3, {id});
  Vector x(3);
  x << 0.3, -2, 7;
  EXPECT_TRUE((eval_point(ident, x).array() == x.array()).all());
  DenseLayer neg;
  neg.W = Matrix::Identity(3, 3);
  neg.b = Vector::Constant(3, -10);
  const NetworkSpec dead(3, {neg, ReluLayer{}});
  EXPECT_TRUE((eval_point(dead, x).array() == 0.0).all());
  EXPECT_THROW(eval_point(ident, Vector::Zero(2)), DimensionError);
}

TEST(Network, OneByOneConvIsBlockDiagonal) {
  std::mt19937_64 gen(32);
  const Conv2DLayer c = random_conv(gen, 3, 3, 2, 4, 1, 1, 0);
  const DenseLayer d = conv_to_dense(c);
  ASSERT_EQ(d.W.rows(), 36);
  ASSERT_EQ(d.W.cols(), 18);
  for (Eigen::Index r = 0; r < d.W.rows(); ++r)
    for (Eigen::Index col = 0; col < d.W.cols(); ++col) {
      const bool same_pixel = r / 4 == col / 2;
      if (!same_pixel) EXPECT_EQ(d.W(r, col), 0.0);
      else EXPECT_EQ(d.W(r, col), c.k(static_cast<int>(r % 4), static_cast<int>(col % 2), 0, 0));
    }
}

TEST(Network, IdentityKernelLowersToIdentity) {
  Conv2DLayer c;
  c.in_h = c.in_w = 5;
  c.in_c = 1;
  c.out_channels = 1;
  c.kernel_h = c.kernel_w = 3;
  c.padding = 1;
  c.kernel = {0, 0, 0, 0, 1, 0, 0, 0, 0};
  c.bias = {0};
  const DenseLayer d = conv_to_dense(c);
  EXPECT_TRUE(d.W.isApprox(Matrix::Identity(25, 25)));
  EXPECT_TRUE((d.W.array() == Matrix::Identity(25, 25).array()).all());
}

TEST(Network, ConvLoweringAgreesExactlyInRationalArithmetic) {
  std::mt19937_64 gen(33);
  std::vector<LayerSpec> layers{random_conv(gen, 8, 8, 1, 2, 3, 1, 0)};
  const NetworkSpec spec(64, std::move(layers));
  const NetworkSpec lowered = lower_conv(spec);
  EXPECT_FALSE(lowered.has_conv());
  for (int t = 0; t < 100; ++t) {
    std::vector<Rational> x(64);
    for (auto& v : x) v = Rational(testing_support::random_double(gen, -4, 2));
    EXPECT_EQ(eval_point<Rational>(spec, x), eval_point<Rational>(lowered, x));
  }
  // Strided and padded variant.
  std::vector<LayerSpec> l2{random_conv(gen, 7, 6, 2, 3, 3, 2, 1)};
  const NetworkSpec s2(84, std::move(l2));
  for (int t = 0; t < 20; ++t) {
    std::vector<Rational> x(84);
    for (auto& v : x) v = Rational(testing_support::random_double(gen, -4, 2));
    EXPECT_EQ(eval_point<Rational>(s2, x), eval_point<Rational>(lower_conv(s2), x));
  }
}

TEST(Network, UnsupportedConvRejected) {
  std::mt19937_64 gen(34);
  Conv2DLayer c = random_conv(gen, 4, 4, 1, 1, 3, 1, 3);
  EXPECT_THROW(validate_conv(c), ValidationError);
  c = random_conv(gen, 4, 4, 1, 1, 3, 0, 0);
  EXPECT_THROW(validate_conv(c), ValidationError);
}

TEST(Network, StripSoftmax) {
  std::mt19937_64 gen(35);
  const NetworkSpec spec = testing_support::random_network(gen, {3, 4, 2}, true, true);
  EXPECT_TRUE(spec.ends_with_softmax());
  const NetworkSpec s = strip_softmax(spec);
  EXPECT_FALSE(s.ends_with_softmax());
  EXPECT_EQ(s.layers().size(), spec.layers().size() - 1);
  const Vector x = Vector::Constant(3, 0.2);
  const Vector p = eval_point(spec, x);
  EXPECT_NEAR(p.sum(), 1.0, 1e-15);
  EXPECT_EQ(argmax(p), argmax(eval_point(s, x)));
}
