#pragma once

// Shared helpers for the unit and acceptance suites.

#include <cmath>
#include <memory>
#include <vector>

#include "seqlab/graph.hpp"
#include "seqlab/rng.hpp"
#include "seqlab/tensor.hpp"

namespace seqlab::testutil {

inline Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.next_double(lo, hi);
  return t;
}

// Test-side central-difference gradients, independent of Graph::backward and
// Graph::grad_check. Perturbs each parameter element and re-runs the forward
// pass only.
inline GradientMap finite_difference_grads(Graph& g, ParameterStore& ps,
                                           NodeId seed, double eps) {
  GradientMap fd;
  for (auto& [name, p] : ps.entries()) {
    Tensor grad = Tensor::zeros(p.shape);
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double saved = p.data[i];
      p.data[i] = saved + eps;
      g.recompute();
      const double fp = g.value(seed).data[0];
      p.data[i] = saved - eps;
      g.recompute();
      const double fm = g.value(seed).data[0];
      p.data[i] = saved;
      grad.data[i] = (fp - fm) / (2.0 * eps);
    }
    fd.emplace(name, std::move(grad));
  }
  g.recompute();
  return fd;
}

inline double max_rel_err(const GradientMap& a, const GradientMap& b) {
  double worst = 0.0;
  for (const auto& [name, ta] : a.entries()) {
    const Tensor& tb = b.at(name);
    for (std::size_t i = 0; i < ta.data.size(); ++i) {
      const double x = ta.data[i], y = tb.data[i];
      const double denom = std::max({std::fabs(x), std::fabs(y), 1e-8});
      worst = std::max(worst, std::fabs(x - y) / denom);
    }
  }
  return worst;
}

struct RandomGraphCase {
  std::unique_ptr<ParameterStore> params;
  std::unique_ptr<Graph> graph;
  NodeId seed = -1;
};

// Random graph over the supported op set with inputs and parameters in
// [-1, 1]; the output is always a scalar that depends on every chain built.
inline RandomGraphCase random_graph_case(std::uint64_t seed_value) {
  Rng rng(seed_value);
  RandomGraphCase c;
  c.params = std::make_unique<ParameterStore>();
  c.graph = std::make_unique<Graph>(c.params.get());
  Graph& g = *c.graph;

  struct Live {
    NodeId id;
    std::vector<int> shape;
  };
  std::vector<Live> live;

  auto dim = [&] { return static_cast<int>(rng.next_int(1, 4)); };

  const int n_params = static_cast<int>(rng.next_int(1, 3));
  for (int i = 0; i < n_params; ++i) {
    std::vector<int> shape = rng.bernoulli(0.5) ? std::vector<int>{dim(), dim()}
                                                : std::vector<int>{dim()};
    std::string name = "p" + std::to_string(i);
    c.params->emplace(name, random_tensor(rng, shape));
    live.push_back({g.param(name), shape});
  }
  const int n_inputs = static_cast<int>(rng.next_int(1, 2));
  for (int i = 0; i < n_inputs; ++i) {
    std::vector<int> shape = rng.bernoulli(0.5) ? std::vector<int>{dim(), dim()}
                                                : std::vector<int>{dim()};
    live.push_back({g.input("x" + std::to_string(i), random_tensor(rng, shape)), shape});
  }

  auto pick = [&]() -> Live& {
    return live[static_cast<std::size_t>(rng.next_below(live.size()))];
  };

  const int n_ops = static_cast<int>(rng.next_int(4, 10));
  for (int k = 0; k < n_ops; ++k) {
    Live& a = pick();
    const int choice = static_cast<int>(rng.next_int(0, 9));
    switch (choice) {
      case 0: live.push_back({g.tanh(a.id), a.shape}); break;
      case 1: live.push_back({g.sigmoid(a.id), a.shape}); break;
      case 2: live.push_back({g.softmax(a.id), a.shape}); break;
      case 3: live.push_back({g.log_softmax(a.id), a.shape}); break;
      case 4: live.push_back({g.scale(a.id, rng.next_double(-2.0, 2.0)), a.shape}); break;
      case 5: {  // add / mul with a fresh same-shape constant
        NodeId b = g.constant(random_tensor(rng, a.shape));
        live.push_back({rng.bernoulli(0.5) ? g.add(a.id, b) : g.mul(a.id, b), a.shape});
        break;
      }
      case 6: {  // matmul with a compatible fresh constant
        if (a.shape.size() == 1) {
          int m = dim();
          NodeId b = g.constant(random_tensor(rng, {a.shape[0], m}));
          live.push_back({g.matmul(a.id, b), {m}});
        } else {
          int m = dim();
          NodeId b = g.constant(random_tensor(rng, {a.shape[1], m}));
          live.push_back({g.matmul(a.id, b), {a.shape[0], m}});
        }
        break;
      }
      case 7: {  // slice a prefix
        if (a.shape[0] > 1) {
          int hi = static_cast<int>(rng.next_int(1, a.shape[0]));
          std::vector<int> s = a.shape;
          s[0] = hi;
          live.push_back({g.slice(a.id, 0, hi, 0), s});
        }
        break;
      }
      case 8: {
        if (a.shape.size() == 2)
          live.push_back({g.transpose(a.id), {a.shape[1], a.shape[0]}});
        break;
      }
      case 9: {  // concat with itself along axis 0
        std::vector<int> s = a.shape;
        s[0] *= 2;
        live.push_back({g.concat(a.id, a.id, 0), s});
        break;
      }
    }
  }

  // Reduce everything to a single scalar so every parameter that joined a
  // chain is reachable from the seed.
  NodeId acc = g.sum(live[0].id);
  for (std::size_t i = 1; i < live.size(); ++i) acc = g.add(acc, g.sum(live[i].id));
  c.seed = acc;
  return c;
}

}  // namespace seqlab::testutil
