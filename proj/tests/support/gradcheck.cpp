#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dgrlab/dgr.hpp"
#include "dgrlab/heads.hpp"
#include "dgrlab/ops.hpp"
#include "dgrlab/train.hpp"

namespace dgrlab::testing {

namespace {

using ad::Shape;
using ad::Tensor;

double probe(const Function& f, const std::vector<Tensor>& inputs, const std::vector<double>& readout) {
  ad::NoGradGuard no_grad;
  const auto result = f(inputs);
  const auto out = result.data();
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) total += out[i] * readout[i];
  return total;
}

Tensor uniform(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(ad::element_count(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Keeps every entry at least `gap` away from zero, so kinks at the origin
// stay outside the difference stencil.
Tensor away_from_zero(Shape shape, Rng& rng, double gap = 0.05) {
  auto t = uniform(std::move(shape), rng);
  for (auto& x : t.mutable_data())
    if (std::abs(x) < gap) x = x < 0 ? -gap : gap;
  return t;
}

Tensor symmetric_nonnegative(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> dist(0.05, 2.0);
  std::vector<double> v(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) v[i * n + j] = v[j * n + i] = dist(rng);
  return Tensor::from({n, n}, std::move(v), true);
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

GcnStack stack_from(const std::vector<Tensor>& in, std::size_t first, std::size_t count) {
  GcnStack s;
  for (std::size_t i = 0; i < count; ++i) s.weights.push_back(in[first + i]);
  return s;
}

Mlp mlp_from(const std::vector<Tensor>& in, std::size_t first, std::size_t layers) {
  Mlp m;
  for (std::size_t l = 0; l < layers; ++l) m.layers.push_back(Linear{in[first + 2 * l], in[first + 2 * l + 1]});
  return m;
}

void push_mlp(std::vector<Tensor>& in, const std::vector<std::size_t>& widths, Rng& rng) {
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    in.push_back(uniform({widths[l], widths[l + 1]}, rng, -1.0, 1.0));
    in.push_back(uniform({widths[l + 1]}, rng, -0.5, 0.5));
  }
}

train::TrainConfig tiny_config(std::uint64_t seed) {
  train::TrainConfig c;
  c.seed = seed;
  c.types = {synth::make_spec(synth::Family::blur, 0), synth::make_spec(synth::Family::additive_noise, 1)};
  c.patch_size = 8;
  c.backbone.channels = {2, 3};
  c.backbone.feature_dim = 4;
  c.graph_size = 3;
  c.edge_dim = 2;
  c.code_dim = 3;
  c.fpn_hidden = 4;
  c.head_hidden = 4;
  return c;
}

std::vector<GradCase> build_cases() {
  std::vector<GradCase> cases;
  auto add = [&](std::string name, std::function<GradInstance(Rng&)> make) {
    cases.push_back({std::move(name), std::move(make)});
  };

  add("matmul", [](Rng& rng) {
    const auto m = pick(rng, 1, 4), k = pick(rng, 1, 4), n = pick(rng, 1, 4);
    return GradInstance{{uniform({m, k}, rng), uniform({k, n}, rng)},
                        [](const std::vector<Tensor>& in) { return ad::matmul(in[0], in[1]); }};
  });
  add("transpose", [](Rng& rng) {
    return GradInstance{{uniform({pick(rng, 1, 4), pick(rng, 1, 4)}, rng)},
                        [](const std::vector<Tensor>& in) { return ad::transpose(in[0]); }};
  });
  add("add", [](Rng& rng) {
    return GradInstance{{uniform({2, 3}, rng), uniform({2, 3}, rng)},
                        [](const std::vector<Tensor>& in) { return ad::add(in[0], in[1]); }};
  });
  add("sub", [](Rng& rng) {
    return GradInstance{{uniform({2, 3}, rng), uniform({2, 3}, rng)},
                        [](const std::vector<Tensor>& in) { return ad::sub(in[0], in[1]); }};
  });
  add("mul", [](Rng& rng) {
    return GradInstance{{uniform({3, 2}, rng), uniform({3, 2}, rng)},
                        [](const std::vector<Tensor>& in) { return ad::mul(in[0], in[1]); }};
  });
  add("scale", [](Rng& rng) {
    const double factor = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
    return GradInstance{{uniform({5}, rng)},
                        [factor](const std::vector<Tensor>& in) { return ad::scale(in[0], factor); }};
  });
  add("add_scalar", [](Rng& rng) {
    const double offset = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
    return GradInstance{{uniform({4}, rng)},
                        [offset](const std::vector<Tensor>& in) { return ad::add_scalar(in[0], offset); }};
  });
  add("relu", [](Rng& rng) {
    return GradInstance{{away_from_zero({3, 4}, rng)}, [](const std::vector<Tensor>& in) { return ad::relu(in[0]); }};
  });
  add("abs", [](Rng& rng) {
    return GradInstance{{away_from_zero({3, 4}, rng)}, [](const std::vector<Tensor>& in) { return ad::abs(in[0]); }};
  });
  add("softplus", [](Rng& rng) {
    return GradInstance{{uniform({3, 4}, rng)}, [](const std::vector<Tensor>& in) { return ad::softplus(in[0]); }};
  });
  add("add_bias", [](Rng& rng) {
    const auto n = pick(rng, 1, 4);
    return GradInstance{{uniform({3, n}, rng), uniform({n}, rng)},
                        [](const std::vector<Tensor>& in) { return ad::add_bias(in[0], in[1]); }};
  });
  add("sum", [](Rng& rng) {
    return GradInstance{{uniform({2, 3, 2}, rng)}, [](const std::vector<Tensor>& in) { return ad::sum(in[0]); }};
  });
  add("mean", [](Rng& rng) {
    return GradInstance{{uniform({7}, rng)}, [](const std::vector<Tensor>& in) { return ad::mean(in[0]); }};
  });
  add("mean_over_axis", [](Rng& rng) {
    const auto axis = pick(rng, 0, 2);
    return GradInstance{{uniform({2, 3, 4}, rng)},
                        [axis](const std::vector<Tensor>& in) { return ad::mean_over_axis(in[0], axis); }};
  });
  add("squared_l2_distance", [](Rng& rng) {
    const auto d = pick(rng, 1, 6);
    return GradInstance{{uniform({d}, rng), uniform({d}, rng)},
                        [](const std::vector<Tensor>& in) { return ad::squared_l2_distance(in[0], in[1]); }};
  });
  add("reshape", [](Rng& rng) {
    return GradInstance{{uniform({2, 6}, rng)},
                        [](const std::vector<Tensor>& in) { return ad::reshape(in[0], {3, 4}); }};
  });
  add("gather_rows", [](Rng& rng) {
    std::vector<std::size_t> rows(6);
    for (auto& r : rows) r = pick(rng, 0, 3);  // repeats exercise accumulation
    return GradInstance{{uniform({4, 3}, rng)},
                        [rows](const std::vector<Tensor>& in) { return ad::gather_rows(in[0], rows); }};
  });
  add("concat_cols", [](Rng& rng) {
    return GradInstance{{uniform({3, pick(rng, 1, 3)}, rng), uniform({3, pick(rng, 1, 3)}, rng)},
                        [](const std::vector<Tensor>& in) { return ad::concat_cols(in[0], in[1]); }};
  });
  add("slice_cols", [](Rng& rng) {
    const auto begin = pick(rng, 0, 3);
    const auto end = pick(rng, begin + 1, 5);
    return GradInstance{{uniform({3, 5}, rng)},
                        [begin, end](const std::vector<Tensor>& in) { return ad::slice_cols(in[0], begin, end); }};
  });
  add("normalize_adjacency", [](Rng& rng) {
    return GradInstance{{symmetric_nonnegative(pick(rng, 2, 5), rng)},
                        [](const std::vector<Tensor>& in) { return ad::normalize_adjacency(in[0]); }};
  });
  add("conv2d", [](Rng& rng) {
    const auto cin = pick(rng, 1, 3), cout = pick(rng, 1, 3), k = 2 * pick(rng, 0, 1) + 1;
    const auto h = pick(rng, 3, 6), w = pick(rng, 3, 6);
    return GradInstance{{uniform({2, cin, h, w}, rng), uniform({cout, cin, k, k}, rng), uniform({cout}, rng)},
                        [](const std::vector<Tensor>& in) { return ad::conv2d(in[0], in[1], in[2]); }};
  });
  add("avg_pool2", [](Rng& rng) {
    return GradInstance{{uniform({2, 2, pick(rng, 2, 5), pick(rng, 2, 5)}, rng)},
                        [](const std::vector<Tensor>& in) { return ad::avg_pool2(in[0]); }};
  });

  add("build_nodes", [](Rng& rng) {
    std::vector<Tensor> in{uniform({4, 3}, rng)};
    push_mlp(in, {3, 3, 3, 3}, rng);
    return GradInstance{in, [](const std::vector<Tensor>& x) { return graph::build_nodes(x[0], mlp_from(x, 1, 3)); }};
  });
  add("init_edges", [](Rng& rng) {
    return GradInstance{{uniform({pick(rng, 2, 4), 3}, rng)},
                        [](const std::vector<Tensor>& in) { return graph::init_edges(in[0]); }};
  });
  add("edge_gcn", [](Rng& rng) {
    const auto n = pick(rng, 2, 3);
    return GradInstance{{uniform({n, n, 4}, rng), uniform({4, 3}, rng, -1, 1), uniform({3, 3}, rng, -1, 1),
                         uniform({3, 2}, rng, -1, 1)},
                        [](const std::vector<Tensor>& in) { return graph::edge_gcn(in[0], stack_from(in, 1, 3)); }};
  });
  add("node_pooling", [](Rng& rng) {
    const auto n = pick(rng, 2, 4);
    return GradInstance{{uniform({n, n, 3}, rng)},
                        [](const std::vector<Tensor>& in) { return graph::node_pooling(in[0]); }};
  });
  add("edge_pooling", [](Rng& rng) {
    const auto n = pick(rng, 2, 4);
    return GradInstance{{uniform({n, n, 3}, rng)},
                        [](const std::vector<Tensor>& in) { return graph::edge_pooling(in[0]); }};
  });
  add("self_loop_edges", [](Rng& rng) {
    const auto n = pick(rng, 2, 4);
    return GradInstance{{uniform({n, n, 2}, rng)},
                        [](const std::vector<Tensor>& in) { return graph::self_loop_edges(in[0]); }};
  });
  add("build_dgr", [](Rng& rng) {
    std::vector<Tensor> in{uniform({3, 3}, rng)};
    push_mlp(in, {3, 3, 3}, rng);
    in.push_back(uniform({3, 2}, rng, -1, 1));
    in.push_back(uniform({2, 2}, rng, -1, 1));
    return GradInstance{in, [](const std::vector<Tensor>& x) {
                          auto dgr = graph::build_dgr(x[0], mlp_from(x, 1, 2), stack_from(x, 5, 2));
                          return ad::concat_cols(ad::reshape(dgr.edges, {9, 2}),
                                                 ad::reshape(dgr.node_adjacency, {9, 1}));
                        }};
  });

  add("tdn_code", [](Rng& rng) {
    const auto n = pick(rng, 2, 5);
    return GradInstance{{uniform({n, 3}, rng), symmetric_nonnegative(n, rng), uniform({3, 4}, rng, -1, 1),
                         uniform({4, 2}, rng, -1, 1)},
                        [](const std::vector<Tensor>& in) {
                          graph::Dgr dgr;
                          dgr.nodes = in[0];
                          dgr.node_adjacency = in[1];
                          return heads::tdn_code(dgr, stack_from(in, 2, 2));
                        }};
  });
  add("triplet_loss", [](Rng& rng) {
    // Resample until the hinge is comfortably active.
    for (;;) {
      auto a = uniform({3}, rng), p = uniform({3}, rng), n = uniform({3}, rng);
      const double margin = 0.1;
      const double inside =
          ad::squared_l2_distance(a, p).item() - ad::squared_l2_distance(a, n).item() + margin;
      if (inside < 0.05) continue;
      return GradInstance{{a, p, n}, [margin](const std::vector<Tensor>& in) {
                            return heads::triplet_loss({in[0], in[1], in[2]}, margin);
                          }};
    }
  });
  add("reparameterize", [](Rng& rng) {
    const auto n = pick(rng, 1, 5);
    std::normal_distribution<double> normal;
    std::vector<double> eps(n);
    for (auto& e : eps) e = normal(rng);
    return GradInstance{{uniform({n}, rng), uniform({n}, rng)}, [eps](const std::vector<Tensor>& in) {
                          return heads::reparameterize(in[0], in[1], eps).y;
                        }};
  });
  add("fpn_predict", [](Rng& rng) {
    const std::size_t n = 3;
    std::vector<Tensor> in{uniform({n, 3}, rng), uniform({n, n, 2}, rng)};
    push_mlp(in, {5, 4, 2}, rng);
    std::normal_distribution<double> normal;
    std::vector<double> eps(n);
    for (auto& e : eps) e = normal(rng);
    return GradInstance{in, [eps](const std::vector<Tensor>& x) {
                          graph::Dgr dgr;
                          dgr.nodes = x[0];
                          dgr.edges = x[1];
                          const auto p = heads::fpn_predict(dgr, mlp_from(x, 2, 2), eps);
                          return ad::concat_cols(ad::reshape(p.y, {3, 1}), ad::reshape(p.sigma, {3, 1}));
                        }};
  });
  add("level_loss", [](Rng& rng) {
    const auto n = pick(rng, 1, 5);
    std::normal_distribution<double> normal;
    std::vector<double> eps(n), targets(n);
    for (auto& e : eps) e = normal(rng);
    for (auto& t : targets) t = static_cast<double>(pick(rng, 1, 5));
    return GradInstance{{uniform({n}, rng, 1, 5), uniform({n}, rng)},
                        [eps, targets](const std::vector<Tensor>& in) {
                          return heads::level_loss(heads::reparameterize(in[0], in[1], eps), targets);
                        }};
  });
  add("combined_loss", [](Rng& rng) {
    const double lambda = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    return GradInstance{{uniform({1}, rng, 0.1, 2), uniform({1}, rng, 0.1, 2)},
                        [lambda](const std::vector<Tensor>& in) {
                          return heads::combined_loss(ad::reshape(in[0], {1}), ad::reshape(in[1], {1}), lambda).total;
                        }};
  });
  add("regression_score", [](Rng& rng) {
    const std::size_t n = 3;
    std::vector<Tensor> in{uniform({n, 3}, rng), uniform({n, n, 2}, rng)};
    push_mlp(in, {5, 4, 1}, rng);
    return GradInstance{in, [](const std::vector<Tensor>& x) {
                          graph::Dgr dgr;
                          dgr.nodes = x[0];
                          dgr.edges = x[1];
                          return heads::regression_score(dgr, mlp_from(x, 2, 2));
                        }};
  });
  add("score_loss", [](Rng& rng) {
    const auto n = pick(rng, 1, 6);
    std::vector<double> target(n);
    for (auto& t : target) t = std::uniform_real_distribution<double>(1.0, 5.0)(rng);
    return GradInstance{{uniform({n}, rng, 1, 5)},
                        [target](const std::vector<Tensor>& in) { return heads::score_loss(in[0], target); }};
  });

  add("backbone", [](Rng& rng) {
    backbone::BackboneConfig bc;
    bc.channels = {2, 3};
    bc.feature_dim = 3;
    const backbone::Backbone net(bc, rng);
    ad::ParameterList params;
    net.collect("b", params);
    std::vector<Tensor> in{uniform({2, 3, 8, 8}, rng, 0, 1)};
    for (auto& p : params) in.push_back(p.tensor);
    return GradInstance{in, [net](const std::vector<Tensor>& x) { return net.forward(x[0]); }};
  });
  add("pretrain_objective", [](Rng& rng) {
    const auto config = tiny_config(rng());
    const auto model = train::DgrModel::create(config);
    const auto triplet = synth::sample_triplet(config.types, config.graph_size, rng, config.sample_options());
    std::normal_distribution<double> normal;
    std::vector<double> eps(config.graph_size), levels;
    for (auto& e : eps) e = normal(rng);
    for (const auto& s : triplet.anchor) levels.push_back(s.level);

    std::vector<Tensor> in;
    for (const auto& p : model.pretrain_parameters()) in.push_back(p.tensor);
    return GradInstance{in, [model, triplet, eps, levels, config](const std::vector<Tensor>&) {
                          const auto a = model.build(triplet.anchor);
                          const auto p = model.build(triplet.positive);
                          const auto n = model.build(triplet.negative);
                          auto dist = heads::triplet_loss(
                              {heads::tdn_code(a, model.tdn), heads::tdn_code(p, model.tdn),
                               heads::tdn_code(n, model.tdn)},
                              config.margin);
                          auto level = heads::level_loss(heads::fpn_predict(a, model.fpn, eps), levels);
                          return ad::add(dist, ad::scale(level, config.lambda));
                        }};
  });
  return cases;
}

}  // namespace

GradCheckResult check_gradients(const Function& f, const std::vector<Tensor>& inputs, double h) {
  for (const auto& t : inputs) {
    if (!t.requires_grad() || !t.is_leaf()) throw std::invalid_argument("gradient check inputs must be leaves");
  }
  std::vector<double> readout;
  {
    ad::NoGradGuard no_grad;
    readout.resize(f(inputs).numel());
  }
  Rng rng(0x9e3779b9ULL + readout.size());
  std::uniform_real_distribution<double> dist(0.5, 1.5);
  for (auto& r : readout) r = std::bernoulli_distribution(0.5)(rng) ? dist(rng) : -dist(rng);

  for (auto t : inputs) t.zero_grad();
  const auto out = f(inputs);
  const auto weights = Tensor::from(out.shape(), readout);
  ad::backprop(ad::sum(ad::mul(out, weights)));

  GradCheckResult result;
  const double f0 = probe(f, inputs, readout);
  // Error is measured on the whole gradient vector: per-tensor ratios are
  // meaningless for tensors whose gradient sits at the rounding floor.
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (const auto& input : inputs) {
    auto t = input;
    auto values = t.mutable_data();
    std::vector<double> analytic(values.size(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());

    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      auto at = [&](double x) {
        values[i] = x;
        const double v = probe(f, inputs, readout);
        values[i] = saved;
        return v;
      };
      const double up = at(saved + h), down = at(saved - h);
      const double up2 = at(saved + h / 2), down2 = at(saved - h / 2);
      const double numeric = (up - down) / (2 * h), half = (up2 - down2) / h;
      // On smooth stretches the central differences agree to O(h^2) and the
      // one-sided slope gap shrinks linearly with the step. A ReLU or hinge
      // switching inside the stencil breaks one of the two.
      const double gap = (up - 2 * f0 + down) / h, gap2 = 2 * (up2 - 2 * f0 + down2) / h;
      const double floor = 1e-8 + 1e-9 * std::abs(f0);
      const double scale = std::max(std::abs(numeric), std::abs(half));
      if (std::abs(numeric - half) > 1e-6 * scale + floor || std::abs(gap - 2 * gap2) > 1e-6 * scale + floor) {
        ++result.kinks;
        continue;
      }
      ++result.coordinates;
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
  }
  const double scale = std::sqrt(std::max(a2, n2));
  result.relative_error = scale > 1e-12 ? std::sqrt(diff2) / scale : std::sqrt(diff2);
  return result;
}

const std::vector<GradCase>& gradient_cases() {
  static const std::vector<GradCase> cases = build_cases();
  return cases;
}

}  // namespace dgrlab::testing
