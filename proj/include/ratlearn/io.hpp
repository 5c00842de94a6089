#pragma once

// JSON files for forms, datasets and run summaries. Matrices are stored as
// dense row-major arrays of rows; infinite box bounds are written as null.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ratlearn/dataset.hpp"
#include "ratlearn/errors.hpp"
#include "ratlearn/games.hpp"
#include "ratlearn/learner.hpp"
#include "ratlearn/model.hpp"

namespace ratlearn {

inline constexpr int kFormatVersion = 1;

using Json = nlohmann::ordered_json;

namespace io_detail {

inline Json vec_to_json(const Vector &v) {
  Json out = Json::array();
  for (int i = 0; i < v.size(); ++i)
    out.push_back(v[i]);
  return out;
}

inline Json mat_to_json(const Matrix &M) {
  Json out = Json::array();
  for (int r = 0; r < M.rows(); ++r) {
    Json row = Json::array();
    for (int c = 0; c < M.cols(); ++c)
      row.push_back(M(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

inline Json bound_to_json(const Vector &v) {
  Json out = Json::array();
  for (int i = 0; i < v.size(); ++i) {
    if (std::isfinite(v[i]))
      out.push_back(v[i]);
    else
      out.push_back(nullptr);
  }
  return out;
}

inline const Json &field(const Json &j, const char *key) {
  if (!j.is_object() || !j.contains(key))
    throw Error(ErrorCode::Format, std::string("missing field '") + key + "'");
  return j.at(key);
}

inline Vector vec_from_json(const Json &j, const char *what) {
  if (!j.is_array())
    throw Error(ErrorCode::Format, std::string(what) + ": expected an array");
  Vector v(static_cast<int>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number())
      throw Error(ErrorCode::Format, std::string(what) + ": non-numeric entry");
    v[static_cast<int>(i)] = j[i].get<double>();
  }
  return v;
}

// `cols` is needed because an empty row list does not carry a width.
inline Matrix mat_from_json(const Json &j, const char *what, int rows, int cols) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows)
    throw Error(ErrorCode::Format, std::string(what) + ": expected " +
                                       std::to_string(rows) + " rows");
  Matrix M(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const Json &row = j[r];
    if (!row.is_array() || static_cast<int>(row.size()) != cols)
      throw Error(ErrorCode::Format, std::string(what) + ": row " +
                                         std::to_string(r) + " must have " +
                                         std::to_string(cols) + " entries");
    for (int c = 0; c < cols; ++c) {
      if (!row[c].is_number())
        throw Error(ErrorCode::Format, std::string(what) + ": non-numeric entry");
      M(r, c) = row[c].get<double>();
    }
  }
  return M;
}

inline Vector bound_from_json(const Json &j, double missing, const char *what) {
  if (!j.is_array())
    throw Error(ErrorCode::Format, std::string(what) + ": expected an array");
  Vector v(static_cast<int>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v[static_cast<int>(i)] = j[i].is_null() ? missing : j[i].get<double>();
  return v;
}

inline void check_version(const Json &j, const char *kind) {
  const Json &v = field(j, "format_version");
  if (!v.is_number_integer() || v.get<int>() != kFormatVersion)
    throw Error(ErrorCode::Format, std::string(kind) +
                                       ": unsupported format_version (expected " +
                                       std::to_string(kFormatVersion) + ")");
  if (field(j, "kind") != kind)
    throw Error(ErrorCode::Format, std::string("not a ") + kind + " file");
}

inline Json parse_file(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::Format, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception &e) {
    throw Error(ErrorCode::Format, path + ": " + e.what());
  }
}

inline void write_file(const std::string &path, const Json &j) {
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorCode::Format, "cannot write " + path);
  out << j.dump(1) << '\n';
}

} // namespace io_detail

inline Json form_to_json(const AffineGameForm &f) {
  using namespace io_detail;
  Json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "form";
  j["name"] = f.name;
  j["n"] = f.n;
  j["m"] = f.m;
  j["l"] = f.l;
  j["p"] = f.p;
  j["k"] = f.k;
  j["R0"] = mat_to_json(f.R0);
  Json R = Json::array();
  for (const Matrix &Rj : f.R)
    R.push_back(mat_to_json(Rj));
  j["R"] = R;
  j["C"] = mat_to_json(f.C);
  j["c0_const"] = vec_to_json(f.c0_const);
  j["c0_mu"] = mat_to_json(f.c0_mu);
  j["A"] = mat_to_json(f.A);
  j["b_const"] = vec_to_json(f.b_const);
  j["b_mu"] = mat_to_json(f.b_mu);
  j["eq_rows"] = f.eq_rows;
  if (f.theta_box) {
    j["theta_box"] = {{"lower", bound_to_json(f.theta_box->lower)},
                      {"upper", bound_to_json(f.theta_box->upper)}};
  } else {
    j["theta_box"] = nullptr;
  }
  return j;
}

inline AffineGameForm form_from_json(const Json &j) {
  using namespace io_detail;
  check_version(j, "form");
  AffineGameForm f;
  f.name = field(j, "name").get<std::string>();
  f.n = field(j, "n").get<int>();
  f.m = field(j, "m").get<int>();
  f.l = field(j, "l").get<int>();
  f.p = field(j, "p").get<int>();
  f.k = field(j, "k").get<int>();
  if (f.n < 1 || f.m < 1 || f.l < 0 || f.p < 1 || f.k < 0)
    throw Error(ErrorCode::Format, "form: bad dimensions");
  const int N = f.n * f.m, M = f.n * f.l;
  f.R0 = mat_from_json(field(j, "R0"), "R0", N, N);
  const Json &R = field(j, "R");
  if (!R.is_array() || static_cast<int>(R.size()) != f.p)
    throw Error(ErrorCode::Format, "R: expected p matrices");
  for (int q = 0; q < f.p; ++q)
    f.R.push_back(mat_from_json(R[q], "R", N, N));
  f.C = mat_from_json(field(j, "C"), "C", N, f.p);
  f.c0_const = vec_from_json(field(j, "c0_const"), "c0_const");
  f.c0_mu = mat_from_json(field(j, "c0_mu"), "c0_mu", N, f.k);
  f.A = mat_from_json(field(j, "A"), "A", M, N);
  f.b_const = vec_from_json(field(j, "b_const"), "b_const");
  f.b_mu = mat_from_json(field(j, "b_mu"), "b_mu", M, f.k);
  f.eq_rows = field(j, "eq_rows").get<std::vector<int>>();
  const Json &box = field(j, "theta_box");
  if (!box.is_null())
    f.theta_box = Box{bound_from_json(field(box, "lower"), -kInf, "lower"),
                      bound_from_json(field(box, "upper"), kInf, "upper")};
  f.validate();
  return f;
}

/// `form_file` is stored as given (normally relative to the dataset file).
inline Json dataset_to_json(const Dataset &d, const std::string &form_file) {
  using namespace io_detail;
  Json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "dataset";
  j["game"] = d.game;
  j["form_file"] = form_file;
  j["n"] = d.n;
  j["m"] = d.m;
  j["p"] = d.p;
  j["sigma"] = d.sigma;
  j["seed"] = d.seed;
  j["theta_true"] = d.theta_true ? vec_to_json(*d.theta_true) : Json(nullptr);
  std::vector<const char *> split(d.points.size(), "train");
  for (int i : d.test)
    split[i] = "test";
  Json pts = Json::array();
  for (std::size_t i = 0; i < d.points.size(); ++i)
    pts.push_back({{"split", split[i]},
                   {"mu", vec_to_json(d.points[i].mu.mu)},
                   {"x", vec_to_json(d.points[i].xbar)}});
  j["points"] = pts;
  return j;
}

inline Dataset dataset_from_json(const Json &j) {
  using namespace io_detail;
  check_version(j, "dataset");
  Dataset d;
  d.game = field(j, "game").get<std::string>();
  d.n = field(j, "n").get<int>();
  d.m = field(j, "m").get<int>();
  d.p = field(j, "p").get<int>();
  d.sigma = field(j, "sigma").get<double>();
  d.seed = field(j, "seed").get<std::uint64_t>();
  const Json &tt = field(j, "theta_true");
  if (!tt.is_null())
    d.theta_true = vec_from_json(tt, "theta_true");
  const Json &pts = field(j, "points");
  if (!pts.is_array())
    throw Error(ErrorCode::Format, "points: expected an array");
  for (std::size_t i = 0; i < pts.size(); ++i) {
    Datapoint dp;
    dp.xbar = vec_from_json(field(pts[i], "x"), "x");
    dp.mu.mu = vec_from_json(field(pts[i], "mu"), "mu");
    if (dp.xbar.size() != d.n * d.m)
      throw Error(ErrorCode::Format,
                  "point " + std::to_string(i) + ": x has wrong length");
    const std::string split = field(pts[i], "split").get<std::string>();
    if (split == "train")
      d.train.push_back(static_cast<int>(i));
    else if (split == "test")
      d.test.push_back(static_cast<int>(i));
    else
      throw Error(ErrorCode::Format, "point " + std::to_string(i) +
                                         ": split must be train or test");
    d.points.push_back(std::move(dp));
  }
  d.validate();
  return d;
}

inline void save_form(const std::string &path, const AffineGameForm &f) {
  io_detail::write_file(path, form_to_json(f));
}

inline AffineGameForm load_form(const std::string &path) {
  return form_from_json(io_detail::parse_file(path));
}

inline void save_dataset(const std::string &path, const Dataset &d,
                         const std::string &form_file) {
  io_detail::write_file(path, dataset_to_json(d, form_file));
}

struct LoadedDataset {
  Dataset data;
  AffineGameForm form;
  std::string form_path;
};

/// Reads a dataset and the form it points to (resolved next to the dataset).
inline LoadedDataset load_dataset(const std::string &path) {
  const Json j = io_detail::parse_file(path);
  LoadedDataset out;
  out.data = dataset_from_json(j);
  std::filesystem::path fp = io_detail::field(j, "form_file").get<std::string>();
  if (fp.is_relative())
    fp = std::filesystem::path(path).parent_path() / fp;
  out.form_path = fp.string();
  out.form = load_form(out.form_path);
  if (out.form.n != out.data.n || out.form.m != out.data.m ||
      out.form.p != out.data.p)
    throw Error(ErrorCode::Format, "dataset and form dimensions disagree");
  for (const Datapoint &dp : out.data.points)
    if (dp.mu.mu.size() != out.form.k)
      throw Error(ErrorCode::Format, "context length does not match form k");
  return out;
}

/// Plain-text edge list: a header line "nodes <V> edges <E> factors <p>",
/// then one line per edge "<from> <to> <L row...>".
inline void save_graph(const std::string &path, const CongestionSpec &spec) {
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorCode::Format, "cannot write " + path);
  out << std::setprecision(17);
  out << "nodes " << spec.graph.num_nodes << " edges " << spec.graph.num_edges()
      << " factors " << spec.L.cols() << '\n';
  for (int e = 0; e < spec.graph.num_edges(); ++e) {
    out << spec.graph.edges[e].first << ' ' << spec.graph.edges[e].second;
    for (int q = 0; q < spec.L.cols(); ++q)
      out << ' ' << spec.L(e, q);
    out << '\n';
  }
}

/// Final theta, counters and a config echo. Deterministic unless wall time
/// recording is enabled.
inline Json summary_to_json(const TrainConfig &cfg, const RunLog &log,
                            const std::string &dataset_path) {
  using namespace io_detail;
  Json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "summary";
  j["dataset"] = dataset_path;
  j["theta"] = vec_to_json(log.theta_final);
  j["theta_initial"] = vec_to_json(log.theta_initial);
  auto nan_or = [](double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); };
  j["final_test_error"] = nan_or(log.final_test_error);
  j["final_train_loss"] = nan_or(log.final_train_loss);
  j["degenerate_events"] = log.events.size();
  long rule2 = 0, fallbacks = 0;
  for (const DegeneracyEvent &e : log.events) {
    rule2 += e.rule_used == DegeneracyRule::Rule2;
    fallbacks += e.fell_back;
  }
  j["rule2_events"] = rule2;
  j["rule2_fallbacks"] = fallbacks;
  j["gradient_clips"] = log.clip_count;
  j["projection_clips"] = log.projection_clips;
  j["init_projected"] = log.init_projected;
  j["singular_skips"] = log.singular_skips;
  if (cfg.check_nash)
    j["max_nash_gap"] = log.max_nash_gap;
  if (cfg.record_wall_time)
    j["total_wall_ms"] = log.total_wall_ms;
  Json c;
  c["T"] = cfg.T;
  c["schedule"] = to_string(cfg.schedule);
  c["eta0"] = cfg.eta0;
  c["seed"] = cfg.seed;
  c["rule"] = to_string(cfg.rule);
  c["epsilon"] = cfg.epsilon;
  c["max_tries"] = cfg.max_tries;
  c["act_tol"] = cfg.act_tol;
  c["kkt_tol"] = cfg.kkt_tol;
  c["eval_every"] = cfg.eval_every;
  c["batch_size"] = cfg.batch_size;
  c["clip_norm"] = cfg.clip_norm;
  c["theta_init"] = cfg.theta_init ? vec_to_json(*cfg.theta_init) : Json(nullptr);
  j["config"] = c;
  return j;
}

inline void save_summary(const std::string &path, const TrainConfig &cfg,
                         const RunLog &log, const std::string &dataset_path) {
  io_detail::write_file(path, summary_to_json(cfg, log, dataset_path));
}

/// Reads `theta` back from a summary file.
inline Vector load_summary_theta(const std::string &path) {
  const Json j = io_detail::parse_file(path);
  io_detail::check_version(j, "summary");
  return io_detail::vec_from_json(io_detail::field(j, "theta"), "theta");
}

} // namespace ratlearn
