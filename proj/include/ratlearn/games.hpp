#pragma once

// The two experiment families (Cournot competition and nonatomic congestion
// over a directed graph) as affine game forms, plus dataset synthesis.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <queue>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ratlearn/dataset.hpp"
#include "ratlearn/errors.hpp"
#include "ratlearn/model.hpp"
#include "ratlearn/qp.hpp"

namespace ratlearn {

using Rng = std::mt19937_64;
using ContextSampler = std::function<ContextVector(Rng &)>;

/// Stream index for drawing instance parameters; datapoints use 1..K.
inline constexpr std::uint64_t kInstanceStream = 1ull << 40;

/// Independent stream for item `index` of a run seeded with `seed`.
inline Rng split_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

/// |N(0, 1)|
inline double abs_normal(Rng &rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  return std::abs(normal(rng));
}

// ---------------------------------------------------------------------------
// Cournot

inline constexpr double kMinSlope = 1e-3;

/// theta = (a, b): inverse demand a - b sum_j x_j. mu = per-agent unit costs.
/// Potential c'x + b sum_i x_i^2 + b sum_{i<j} x_i x_j - a 1'x, so
/// R = b (I + J) and c = mu - a 1, with x >= 0.
inline AffineGameForm cournot_form(int n) {
  if (n < 2)
    throw Error(ErrorCode::InvalidArgument, "Cournot game needs n >= 2");
  AffineGameForm f;
  f.name = "cournot";
  f.n = n;
  f.m = 1;
  f.l = 1;
  f.p = 2;
  f.k = n;
  f.R0 = Matrix::Zero(n, n);
  f.R = {Matrix::Zero(n, n),
         Matrix(Matrix::Identity(n, n) + Matrix::Ones(n, n))};
  f.C = Matrix::Zero(n, 2);
  f.C.col(0).setConstant(-1.0);
  f.c0_const = Vector::Zero(n);
  f.c0_mu = Matrix::Identity(n, n);
  f.A = -Matrix::Identity(n, n);
  f.b_const = Vector::Zero(n);
  f.b_mu = Matrix::Zero(n, n);
  Box box = Box::unbounded(2);
  box.lower[1] = kMinSlope;
  f.theta_box = box;
  return f;
}

/// u_i = -(a - b sum_j x_j) x_i + c_i x_i
inline double cournot_utility(const Vector &theta, const Vector &costs,
                              const Vector &x, int i) {
  const double price = theta[0] - theta[1] * x.sum();
  return -price * x[i] + costs[i] * x[i];
}

/// Stacked d u_i / d x_i, differentiated from the utility (not the potential).
inline Vector cournot_utility_gradient(const Vector &theta, const Vector &costs,
                                       const Vector &x) {
  const double a = theta[0], b = theta[1];
  const double total = x.sum();
  Vector g(x.size());
  for (int i = 0; i < x.size(); ++i)
    g[i] = -(a - b * total) + b * x[i] + costs[i];
  return g;
}

/// Interior equilibrium with equal costs: (a - c) / (b (n + 1)).
inline double cournot_symmetric_equilibrium(double a, double b, double cost,
                                            int n) {
  return (a - cost) / (b * (n + 1));
}

/// a = |N(0,1)|, b = max(|N(0,1)|, kMinSlope)
inline Vector random_cournot_theta(Rng &rng) {
  Vector th(2);
  th[0] = abs_normal(rng);
  th[1] = std::max(abs_normal(rng), kMinSlope);
  return th;
}

inline ContextSampler cournot_context_sampler(int n) {
  return [n](Rng &rng) {
    ContextVector ctx{Vector(n)};
    for (int i = 0; i < n; ++i)
      ctx.mu[i] = abs_normal(rng);
    return ctx;
  };
}

// ---------------------------------------------------------------------------
// Congestion

struct Graph {
  int num_nodes = 0;
  std::vector<std::pair<int, int>> edges; // directed (tail, head)

  int num_edges() const { return static_cast<int>(edges.size()); }

  bool has_path(int s, int t) const {
    if (s == t)
      return true;
    std::vector<std::vector<int>> out(num_nodes);
    for (const auto &[u, v] : edges)
      out[u].push_back(v);
    std::vector<char> seen(num_nodes, 0);
    std::queue<int> q;
    q.push(s);
    seen[s] = 1;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int v : out[u]) {
        if (v == t)
          return true;
        if (!seen[v]) {
          seen[v] = 1;
          q.push(v);
        }
      }
    }
    return false;
  }

  /// Component label per node, ignoring edge direction.
  std::vector<int> weak_components() const {
    std::vector<int> parent(num_nodes);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int u) {
      return parent[u] == u ? u : parent[u] = find(parent[u]);
    };
    for (const auto &[u, v] : edges)
      parent[find(u)] = find(v);
    std::vector<int> label(num_nodes);
    for (int u = 0; u < num_nodes; ++u)
      label[u] = find(u);
    return label;
  }

  std::vector<std::pair<int, int>> reachable_pairs() const {
    std::vector<std::pair<int, int>> out;
    for (int s = 0; s < num_nodes; ++s)
      for (int t = 0; t < num_nodes; ++t)
        if (s != t && has_path(s, t))
          out.emplace_back(s, t);
    return out;
  }
};

struct Commodity {
  int source = 0;
  int target = 0;
  double demand = 1.0;
};

struct CongestionSpec {
  Graph graph;
  Matrix L; // (|E| x p), nonnegative edge factors; edge costs C = L theta
  std::vector<Commodity> commodities;
  Vector theta_true;

  int num_agents() const { return static_cast<int>(commodities.size()); }
};

/// Each ordered pair (u, v), u != v, is an edge with probability p_edge.
/// Resampled until every pair in `required` has a directed path.
inline Graph erdos_renyi(int num_nodes, double p_edge, Rng &rng,
                         const std::vector<std::pair<int, int>> &required = {},
                         int max_resamples = 1000) {
  if (num_nodes < 2)
    throw Error(ErrorCode::InvalidArgument, "need at least 2 nodes");
  if (!(p_edge > 0.0 && p_edge <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "p_edge must lie in (0, 1]");
  std::bernoulli_distribution coin(p_edge);
  for (int attempt = 0; attempt < max_resamples; ++attempt) {
    Graph g;
    g.num_nodes = num_nodes;
    for (int u = 0; u < num_nodes; ++u)
      for (int v = 0; v < num_nodes; ++v)
        if (u != v && coin(rng))
          g.edges.emplace_back(u, v);
    bool ok = true;
    for (const auto &[s, t] : required)
      if (!g.has_path(s, t)) {
        ok = false;
        break;
      }
    if (ok)
      return g;
  }
  throw Error(ErrorCode::InvalidArgument,
              "no graph connecting the commodities after " +
                  std::to_string(max_resamples) + " samples");
}

/// |N(0,1)| entries with unit-norm columns.
inline Matrix random_factor_matrix(int num_edges, int p, Rng &rng) {
  Matrix L(num_edges, p);
  for (int j = 0; j < p; ++j) {
    for (int e = 0; e < num_edges; ++e)
      L(e, j) = abs_normal(rng);
    L.col(j) /= L.col(j).norm();
  }
  return L;
}

/// Supply vector layout: mu[i * |V| + v] = outflow - inflow required of agent
/// i at node v (+d_i at s_i, -d_i at t_i, 0 elsewhere).
inline ContextVector congestion_context(int num_nodes,
                                        const std::vector<Commodity> &coms) {
  ContextVector ctx{Vector::Zero(static_cast<long>(coms.size()) * num_nodes)};
  for (std::size_t i = 0; i < coms.size(); ++i) {
    ctx.mu[i * num_nodes + coms[i].source] += coms[i].demand;
    ctx.mu[i * num_nodes + coms[i].target] -= coms[i].demand;
  }
  return ctx;
}

/// Variables x[i * |E| + e] >= 0 (flow of agent i on edge e). Per agent the
/// constraint rows are |E| nonnegativity rows followed by flow conservation
/// at every node except the first node of each weakly connected component
/// (the dropped rows are implied by the others).
/// R(theta) = sum_e (L theta)_e (I + J) over the agents' copies of edge e,
/// c = 0.
inline AffineGameForm congestion_form(const CongestionSpec &spec) {
  const Graph &g = spec.graph;
  const int n = spec.num_agents();
  const int E = g.num_edges();
  const int V = g.num_nodes;
  const int p = static_cast<int>(spec.L.cols());
  if (n < 1 || E < 1)
    throw Error(ErrorCode::InvalidArgument, "congestion game needs agents and edges");
  if (spec.L.rows() != E)
    throw Error(ErrorCode::DimensionMismatch, "L must have one row per edge");
  if ((spec.L.array() < 0.0).any())
    throw Error(ErrorCode::InvalidArgument, "L must be nonnegative");
  for (int i = 0; i < n; ++i) {
    const Commodity &c = spec.commodities[i];
    if (c.source < 0 || c.source >= V || c.target < 0 || c.target >= V ||
        !g.has_path(c.source, c.target))
      throw Error(ErrorCode::InvalidArgument,
                  "commodity of agent " + std::to_string(i) + " is disconnected");
    if (!(c.demand > 0.0))
      throw Error(ErrorCode::InvalidArgument, "demands must be positive");
  }

  const std::vector<int> comp = g.weak_components();
  std::vector<int> kept_nodes;
  std::vector<char> comp_seen(V, 0);
  for (int v = 0; v < V; ++v) {
    if (!comp_seen[comp[v]]) {
      comp_seen[comp[v]] = 1;
      continue;
    }
    kept_nodes.push_back(v);
  }
  const int K = static_cast<int>(kept_nodes.size());

  AffineGameForm f;
  f.name = "congestion";
  f.n = n;
  f.m = E;
  f.l = E + K;
  f.p = p;
  f.k = n * V;
  const int N = n * E;
  const int M = n * f.l;
  f.R0 = Matrix::Zero(N, N);
  f.R.assign(p, Matrix::Zero(N, N));
  for (int e = 0; e < E; ++e)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double block = (i == j) ? 2.0 : 1.0;
        for (int q = 0; q < p; ++q)
          f.R[q](i * E + e, j * E + e) += block * spec.L(e, q);
      }
  f.C = Matrix::Zero(N, p);
  f.c0_const = Vector::Zero(N);
  f.c0_mu = Matrix::Zero(N, f.k);
  f.A = Matrix::Zero(M, N);
  f.b_const = Vector::Zero(M);
  f.b_mu = Matrix::Zero(M, f.k);
  for (int i = 0; i < n; ++i) {
    const int base = i * f.l;
    for (int e = 0; e < E; ++e)
      f.A(base + e, i * E + e) = -1.0;
    for (int r = 0; r < K; ++r) {
      const int v = kept_nodes[r];
      const int row = base + E + r;
      for (int e = 0; e < E; ++e) {
        if (g.edges[e].first == v)
          f.A(row, i * E + e) += 1.0;
        if (g.edges[e].second == v)
          f.A(row, i * E + e) -= 1.0;
      }
      f.b_mu(row, i * V + v) = 1.0;
      f.eq_rows.push_back(row);
    }
  }
  // (L theta)_e >= kMinSlope for theta >= lower since L >= 0.
  double min_row_sum = kInf;
  for (int e = 0; e < E; ++e)
    min_row_sum = std::min(min_row_sum, spec.L.row(e).sum());
  if (!(min_row_sum > 0.0))
    throw Error(ErrorCode::InvalidArgument, "every edge needs a positive factor");
  Box box = Box::unbounded(p);
  box.lower.setConstant(kMinSlope / min_row_sum);
  f.theta_box = box;
  return f;
}

/// d u_i / d x_ie = C_e (sum_j x_je + x_ie) for u_i = sum_e C_e x_ie sum_j x_je.
inline Vector congestion_utility_gradient(const CongestionSpec &spec,
                                          const Vector &theta, const Vector &x) {
  const int n = spec.num_agents();
  const int E = spec.graph.num_edges();
  const Vector cost = spec.L * theta;
  Vector g(n * E);
  for (int e = 0; e < E; ++e) {
    double load = 0.0;
    for (int j = 0; j < n; ++j)
      load += x[j * E + e];
    for (int i = 0; i < n; ++i)
      g[i * E + e] = cost[e] * (load + x[i * E + e]);
  }
  return g;
}

inline double congestion_utility(const CongestionSpec &spec, const Vector &theta,
                                 const Vector &x, int i) {
  const int n = spec.num_agents();
  const int E = spec.graph.num_edges();
  const Vector cost = spec.L * theta;
  double u = 0.0;
  for (int e = 0; e < E; ++e) {
    double load = 0.0;
    for (int j = 0; j < n; ++j)
      load += x[j * E + e];
    u += cost[e] * x[i * E + e] * load;
  }
  return u;
}

/// Per datapoint, every agent draws an ordered (s, t) pair uniformly among the
/// pairs joined by a directed path and a demand |N(0,1)|.
inline ContextSampler congestion_context_sampler(const Graph &graph,
                                                 int num_agents) {
  const auto pairs = graph.reachable_pairs();
  if (pairs.empty())
    throw Error(ErrorCode::InvalidArgument, "graph has no connected pair");
  return [graph, pairs, num_agents](Rng &rng) {
    std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
    std::vector<Commodity> coms(num_agents);
    for (auto &c : coms) {
      const auto &[s, t] = pairs[pick(rng)];
      c.source = s;
      c.target = t;
      c.demand = abs_normal(rng);
    }
    return congestion_context(graph.num_nodes, coms);
  };
}

/// Commodities with distinct random endpoints, an Erdos-Renyi graph connecting
/// them, |N(0,1)| factors and true parameters.
inline CongestionSpec random_congestion_spec(int num_nodes, double p_edge,
                                             int num_agents, int p, Rng &rng) {
  CongestionSpec spec;
  std::uniform_int_distribution<int> node(0, num_nodes - 1);
  std::vector<std::pair<int, int>> required;
  for (int i = 0; i < num_agents; ++i) {
    Commodity c;
    c.source = node(rng);
    do {
      c.target = node(rng);
    } while (c.target == c.source);
    c.demand = abs_normal(rng);
    spec.commodities.push_back(c);
    required.emplace_back(c.source, c.target);
  }
  spec.graph = erdos_renyi(num_nodes, p_edge, rng, required);
  spec.L = random_factor_matrix(spec.graph.num_edges(), p, rng);
  spec.theta_true.resize(p);
  for (int j = 0; j < p; ++j)
    spec.theta_true[j] = abs_normal(rng);
  return spec;
}

// ---------------------------------------------------------------------------
// Datasets

/// x_k = equilibrium at (theta_true, mu_k) + N(0, sigma^2 I). Point k uses its
/// own stream split from `seed`; the split is a random subset of
/// round(K * test_fraction) test points.
inline Dataset generate_dataset(const AffineGameForm &form,
                                const Vector &theta_true,
                                const ContextSampler &sampler, int K,
                                double sigma, std::uint64_t seed,
                                double test_fraction = 0.1) {
  if (K < 1)
    throw Error(ErrorCode::InvalidArgument, "K must be >= 1");
  if (!(sigma >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "sigma must be >= 0");
  Dataset ds;
  ds.game = form.name;
  ds.n = form.n;
  ds.m = form.m;
  ds.p = form.p;
  ds.sigma = sigma;
  ds.seed = seed;
  ds.theta_true = theta_true;
  const RationalityVector theta = form.make_theta(theta_true);
  for (int k = 0; k < K; ++k) {
    Rng rng = split_rng(seed, static_cast<std::uint64_t>(k) + 1);
    Datapoint dp;
    dp.mu = sampler(rng);
    EquilibriumSolution sol;
    try {
      sol = solve_potential(assemble(form, theta, dp.mu));
    } catch (const Error &e) {
      throw Error(e.code(), "datapoint " + std::to_string(k) + ": " + e.what());
    }
    dp.xbar = sol.x;
    if (sigma > 0.0) {
      std::normal_distribution<double> noise(0.0, sigma);
      for (int i = 0; i < dp.xbar.size(); ++i)
        dp.xbar[i] += noise(rng);
    }
    ds.points.push_back(std::move(dp));
  }
  Rng master = split_rng(seed, 0);
  std::vector<int> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), master);
  const int num_test = static_cast<int>(std::lround(K * test_fraction));
  ds.test.assign(order.begin(), order.begin() + num_test);
  ds.train.assign(order.begin() + num_test, order.end());
  std::sort(ds.test.begin(), ds.test.end());
  std::sort(ds.train.begin(), ds.train.end());
  return ds;
}

} // namespace ratlearn
