#include "nphmm/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "nphmm/error.hpp"

namespace nphmm {

using nlohmann::json;

namespace {

[[noreturn]] void parse_fail(const std::string& what) { throw Error(ErrorCode::ParseError, what); }

const json& field(const json& doc, const char* key, const std::string& context) {
  if (!doc.is_object()) parse_fail(context + " must be a JSON object");
  const auto it = doc.find(key);
  if (it == doc.end()) parse_fail(context + " is missing \"" + key + "\"");
  return *it;
}

double number(const json& v, const std::string& context) {
  if (!v.is_number()) parse_fail(context + " must be a number");
  return v.get<double>();
}

std::int64_t integer(const json& v, const std::string& context) {
  if (!v.is_number_integer()) parse_fail(context + " must be an integer");
  return v.get<std::int64_t>();
}

std::string text(const json& v, const std::string& context) {
  if (!v.is_string()) parse_fail(context + " must be a string");
  return v.get<std::string>();
}

bool boolean(const json& v, const std::string& context) {
  if (!v.is_boolean()) parse_fail(context + " must be true or false");
  return v.get<bool>();
}

json to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(to_json(Eigen::VectorXd(m.row(r).transpose())));
  return out;
}

Eigen::VectorXd vector_from(const json& v, const std::string& context) {
  if (!v.is_array()) parse_fail(context + " must be an array of numbers");
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = number(v[i], context + "[" + std::to_string(i) + "]");
  return out;
}

Eigen::MatrixXd matrix_from(const json& v, const std::string& context) {
  if (!v.is_array() || v.empty()) parse_fail(context + " must be a non-empty array of rows");
  const Eigen::VectorXd first = vector_from(v[0], context + "[0]");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(v.size()), first.size());
  for (std::size_t r = 0; r < v.size(); ++r) {
    const Eigen::VectorXd row = vector_from(v[r], context + "[" + std::to_string(r) + "]");
    if (row.size() != first.size()) parse_fail(context + " rows differ in length");
    out.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return out;
}

json component_to_json(const Component& c) {
  return std::visit(
      [](const auto& comp) -> json {
        using T = std::decay_t<decltype(comp)>;
        if constexpr (std::is_same_v<T, PoissonComponent>) {
          return {{"type", "poisson"}, {"rate", comp.rate}};
        } else if constexpr (std::is_same_v<T, GaussianComponent>) {
          return {{"type", "gaussian"}, {"mean", to_json(comp.mean)}, {"variance", to_json(comp.variance)}};
        } else if constexpr (std::is_same_v<T, BinomialComponent>) {
          return {{"type", "binomial"}, {"trials", comp.trials}, {"prob", comp.prob}};
        } else if constexpr (std::is_same_v<T, TriangularComponent>) {
          return {{"type", "triangular"}, {"size", comp.size}};
        } else {
          return {{"type", "dirac-zero"}};
        }
      },
      c);
}

Component component_from_json(const json& doc, const std::string& context) {
  const std::string type = text(field(doc, "type", context), context + ".type");
  if (type == "poisson") return PoissonComponent{number(field(doc, "rate", context), context + ".rate")};
  if (type == "gaussian") {
    return GaussianComponent{vector_from(field(doc, "mean", context), context + ".mean"),
                             vector_from(field(doc, "variance", context), context + ".variance")};
  }
  if (type == "binomial") {
    return BinomialComponent{static_cast<int>(integer(field(doc, "trials", context), context + ".trials")),
                             number(field(doc, "prob", context), context + ".prob")};
  }
  if (type == "triangular") {
    return TriangularComponent{static_cast<int>(integer(field(doc, "size", context), context + ".size"))};
  }
  if (type == "dirac-zero") return DiracAtZero{};
  parse_fail(context + ".type '" + type + "' is not a known component");
}

json emission_to_json(const EmissionModel& emission) {
  return std::visit(
      [](const auto& e) -> json {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, DiscreteEmission>) {
          return {{"family", "discrete"}, {"probs", to_json(e.probs)}};
        } else if constexpr (std::is_same_v<T, NegBinEmission>) {
          return {{"family", "negbin"}, {"r", to_json(e.r)}, {"p", to_json(e.p)}};
        } else if constexpr (std::is_same_v<T, MixtureEmission>) {
          json comps = json::array();
          for (const auto& c : e.components) comps.push_back(component_to_json(c));
          return {{"family", "mixture"},
                  {"zero_inflated", e.zero_inflated},
                  {"psi", to_json(e.psi)},
                  {"components", comps}};
        } else {
          return {{"family", "kernel"},
                  {"kernel", to_string(e.kernel)},
                  {"bandwidth", e.bandwidth},
                  {"anchors", to_json(e.anchors)},
                  {"weights", to_json(e.weights)}};
        }
      },
      emission);
}

EmissionModel emission_from_json(const json& doc) {
  const std::string ctx = "emission";
  const std::string family = text(field(doc, "family", ctx), "emission.family");
  if (family == "discrete") return DiscreteEmission{matrix_from(field(doc, "probs", ctx), "emission.probs")};
  if (family == "negbin") {
    return NegBinEmission{vector_from(field(doc, "r", ctx), "emission.r"),
                          vector_from(field(doc, "p", ctx), "emission.p")};
  }
  if (family == "mixture") {
    MixtureEmission e;
    e.psi = matrix_from(field(doc, "psi", ctx), "emission.psi");
    const json& comps = field(doc, "components", ctx);
    if (!comps.is_array()) parse_fail("emission.components must be an array");
    for (std::size_t l = 0; l < comps.size(); ++l)
      e.components.push_back(component_from_json(comps[l], "emission.components[" + std::to_string(l) + "]"));
    if (doc.contains("zero_inflated")) e.zero_inflated = boolean(doc["zero_inflated"], "emission.zero_inflated");
    return e;
  }
  if (family == "kernel") {
    KernelEmission e;
    try {
      e.kernel = parse_kernel_id(text(field(doc, "kernel", ctx), "emission.kernel"));
    } catch (const Error& err) {
      parse_fail(std::string("emission.kernel: ") + err.message());
    }
    e.bandwidth = number(field(doc, "bandwidth", ctx), "emission.bandwidth");
    e.anchors = matrix_from(field(doc, "anchors", ctx), "emission.anchors");
    e.weights = matrix_from(field(doc, "weights", ctx), "emission.weights");
    return e;
  }
  parse_fail("emission.family '" + family + "' is not a known family");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) parse_fail("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',' || ch == ';' || ch == ' ' || ch == '\t' || ch == '\r') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

template <typename T>
bool parse_full(const std::string& token, T& value) {
  const char* begin = token.data();
  const char* end = begin + token.size();
  if (begin != end && *begin == '+') ++begin;
  const auto result = std::from_chars(begin, end, value);
  return result.ec == std::errc() && result.ptr == end;
}

bool is_skippable(const std::string& line) {
  const auto pos = line.find_first_not_of(" \t\r");
  return pos == std::string::npos || line[pos] == '#';
}

bool all_numeric(const std::vector<std::string>& fields) {
  for (const auto& f : fields) {
    double v = 0.0;
    if (!parse_full(f, v)) return false;
  }
  return true;
}

Eigen::Index as_index(std::int64_t v, const std::string& context) {
  if (v < 1) parse_fail(context + " must be >= 1");
  return static_cast<Eigen::Index>(v);
}

}  // namespace

json model_to_json(const HmmModel& model) {
  return {{"schema", kModelSchema},
          {"version", kModelVersion},
          {"k", model.k()},
          {"Q", to_json(model.transition.Q())},
          {"init", to_json(model.transition.init())},
          {"emission", emission_to_json(model.emission)}};
}

HmmModel model_from_json(const json& doc) {
  try {
    if (text(field(doc, "schema", "model"), "model.schema") != kModelSchema) {
      parse_fail("model.schema is not \"" + std::string(kModelSchema) + "\"");
    }
    const auto version = integer(field(doc, "version", "model"), "model.version");
    if (version != kModelVersion) parse_fail("unsupported model version " + std::to_string(version));
    const auto k = integer(field(doc, "k", "model"), "model.k");
    Eigen::MatrixXd Q = matrix_from(field(doc, "Q", "model"), "model.Q");
    Eigen::VectorXd init = vector_from(field(doc, "init", "model"), "model.init");
    if (Q.rows() != k) throw Error(ErrorCode::InvalidModel, "model.k disagrees with the size of Q");
    HmmModel model{TransitionModel(std::move(Q), std::move(init)), emission_from_json(field(doc, "emission", "model"))};
    validate(model);
    return model;
  } catch (const json::exception& e) {
    parse_fail(std::string("malformed model: ") + e.what());
  }
}

json read_json(const std::filesystem::path& path) {
  const std::string content = read_text(path);
  try {
    return json::parse(content);
  } catch (const json::parse_error& e) {
    parse_fail(path.string() + ": " + e.what());
  }
}

HmmModel read_model(const std::filesystem::path& path) {
  const json doc = read_json(path);
  try {
    return model_from_json(doc);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

ObservationSequence parse_observations(std::istream& in, ObservationKind kind, const std::string& source) {
  std::vector<std::int64_t> counts;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_skippable(line)) continue;
    const auto fields = split_fields(line);
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (first) {
      first = false;
      if (!all_numeric(fields)) continue;  // header
    }
    if (kind == ObservationKind::Count) {
      if (fields.size() != 1) parse_fail(where + "expected a single count per line");
      std::int64_t v = 0;
      if (!parse_full(fields[0], v)) parse_fail(where + "'" + fields[0] + "' is not an integer count");
      if (v < 0) parse_fail(where + "counts must be non-negative");
      counts.push_back(v);
    } else {
      if (width == 0) width = fields.size();
      if (fields.size() != width) {
        parse_fail(where + "expected " + std::to_string(width) + " columns, found " + std::to_string(fields.size()));
      }
      std::vector<double> row(width);
      for (std::size_t c = 0; c < width; ++c) {
        if (!parse_full(fields[c], row[c]) || !std::isfinite(row[c])) {
          parse_fail(where + "'" + fields[c] + "' is not a finite number");
        }
      }
      rows.push_back(std::move(row));
    }
  }
  if (kind == ObservationKind::Count) {
    if (counts.empty()) parse_fail(source + ": no observations");
    return ObservationSequence::counts(counts);
  }
  if (rows.empty()) parse_fail(source + ": no observations");
  Eigen::MatrixXd values(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < width; ++c) values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return ObservationSequence::real(std::move(values));
}

ObservationSequence read_observations(const std::filesystem::path& path, ObservationKind kind) {
  std::ifstream in(path);
  if (!in) parse_fail("cannot open " + path.string());
  return parse_observations(in, kind, path.string());
}

std::string format_observations(const ObservationSequence& obs) {
  std::string out;
  for (Eigen::Index i = 0; i < obs.size(); ++i) {
    if (obs.kind() == ObservationKind::Count) {
      out += std::to_string(obs.count(i));
    } else {
      for (Eigen::Index c = 0; c < obs.dim(); ++c) {
        if (c > 0) out += ',';
        out += format_double(obs.values()(i, c));
      }
    }
    out += '\n';
  }
  return out;
}

StatePath parse_states(std::istream& in, const std::string& source) {
  StatePath out;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_skippable(line)) continue;
    const auto fields = split_fields(line);
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (first) {
      first = false;
      if (!all_numeric(fields)) continue;
    }
    int v = 0;
    if (fields.size() != 1 || !parse_full(fields[0], v)) parse_fail(where + "expected one integer state label");
    if (v < 1) parse_fail(where + "state labels start at 1");
    out.push_back(v - 1);
  }
  if (out.empty()) parse_fail(source + ": no state labels");
  return out;
}

StatePath read_states(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) parse_fail("cannot open " + path.string());
  return parse_states(in, path.string());
}

std::string format_states(const StatePath& path) {
  std::string out;
  for (int s : path) out += std::to_string(s + 1) + '\n';
  return out;
}

json fit_report_to_json(const FitReport& report, const FitOptions& opts) {
  json errors = json::array();
  for (const auto& e : report.start_errors) errors.push_back(e.empty() ? json(nullptr) : json(e));
  json out = {{"schema", "nphmm-fit-report"},
              {"version", 1},
              {"family", to_string(opts.emission.family)},
              {"k", report.model.k()},
              {"seed", opts.seed},
              {"starts", opts.n_starts},
              {"best_start", report.best_start},
              {"converged", report.converged},
              {"iterations", report.iterations},
              {"log_lik", report.log_lik},
              {"objective", report.objective_trace.back()},
              {"objective_trace", report.objective_trace},
              {"start_errors", errors}};
  if (opts.emission.family == FamilyKind::NpRegularized) {
    out["lambda"] = opts.emission.penalty.lambda;
    out["alpha"] = opts.emission.penalty.alpha;
  }
  if (const auto* k = std::get_if<KernelEmission>(&report.model.emission)) out["bandwidth"] = k->bandwidth;
  return out;
}

json diagnostics_to_json(const IdentifiabilityReport& r) {
  json out = {{"schema", "nphmm-identifiability"},
              {"version", 1},
              {"identifiable", r.identifiable()},
              {"q_full_rank", r.q_full_rank},
              {"q_sigma_min", r.q_sigma_min},
              {"emissions_independent", r.emissions_independent},
              {"emission_sigma_min", r.emission_sigma_min},
              {"emission_check", r.emission_check_rigorous ? "rigorous" : "heuristic"},
              {"emission_method", r.emission_method},
              {"tolerance", r.tolerance},
              {"notes", r.notes}};
  if (r.has_psi_check) {
    out["psi_full_rank"] = r.psi_full_rank;
    out["psi_sigma_min"] = r.psi_sigma_min;
  }
  return out;
}

RegionScheme scheme_from_json(const json& doc) {
  try {
    if (doc.is_string() || (doc.is_object() && doc.contains("preset"))) {
      const std::string preset = text(doc.is_string() ? doc : doc["preset"], "preset");
      if (preset != "desk") parse_fail("unknown preset '" + preset + "'");
      return default_desk_scheme();
    }
    RegionScheme scheme;
    const json& dists = field(doc, "distributions", "scheme");
    if (!dists.is_array()) parse_fail("scheme.distributions must be an array");
    for (std::size_t j = 0; j < dists.size(); ++j)
      scheme.distributions.push_back(vector_from(dists[j], "scheme.distributions[" + std::to_string(j) + "]"));
    const json& regions = field(doc, "regions", "scheme");
    if (!regions.is_array()) parse_fail("scheme.regions must be an array");
    for (std::size_t r = 0; r < regions.size(); ++r) {
      const std::string ctx = "scheme.regions[" + std::to_string(r) + "]";
      const auto state = integer(field(regions[r], "state", ctx), ctx + ".state");
      const auto length = integer(field(regions[r], "length", ctx), ctx + ".length");
      scheme.regions.push_back({static_cast<int>(state) - 1, as_index(length, ctx + ".length")});
    }
    validate(scheme);
    return scheme;
  } catch (const json::exception& e) {
    parse_fail(std::string("malformed scheme: ") + e.what());
  }
}

std::variant<RegionScheme, SimulationModel> simulation_from_json(const json& doc,
                                                                 const std::filesystem::path& base_dir) {
  if (doc.is_string() && doc.get<std::string>() != "desk") {
    const std::filesystem::path path = base_dir / doc.get<std::string>();
    return simulation_from_json(read_json(path), path.parent_path());
  }
  if (doc.is_object() && doc.contains("model")) {
    const json& m = doc["model"];
    HmmModel model = m.is_string() ? read_model(base_dir / text(m, "model")) : model_from_json(m);
    const Eigen::Index n = as_index(integer(field(doc, "n", "simulation"), "n"), "n");
    return SimulationModel{std::move(model), n};
  }
  return scheme_from_json(doc);
}

FitOptions fit_options_from_json(const json& doc, const std::vector<std::string>& extra_keys) {
  static const std::set<std::string> known = {"emission", "lambda", "alpha", "components", "component_family",
                                              "kernel", "bandwidth", "inner_iters", "anchor_stride", "max_iter",
                                              "tol", "starts", "init_smoothing"};
  if (!doc.is_object()) parse_fail("fit settings must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (!known.count(key) && std::find(extra_keys.begin(), extra_keys.end(), key) == extra_keys.end()) {
      parse_fail("unknown fit setting \"" + key + "\"");
    }
  }
  FitOptions o;
  auto& e = o.emission;
  e.family = parse_family(text(field(doc, "emission", "fit settings"), "emission"));
  if (doc.contains("lambda")) e.penalty.lambda = number(doc["lambda"], "lambda");
  if (doc.contains("alpha")) e.penalty.alpha = number(doc["alpha"], "alpha");
  if (doc.contains("components")) e.components = static_cast<int>(integer(doc["components"], "components"));
  if (doc.contains("component_family")) {
    e.component_family = parse_component_family(text(doc["component_family"], "component_family"));
  }
  if (doc.contains("kernel")) e.kernel = parse_kernel_id(text(doc["kernel"], "kernel"));
  if (doc.contains("bandwidth")) e.bandwidth = number(doc["bandwidth"], "bandwidth");
  if (doc.contains("inner_iters")) e.inner_iters = static_cast<int>(integer(doc["inner_iters"], "inner_iters"));
  if (doc.contains("anchor_stride")) {
    e.anchor_stride = static_cast<int>(integer(doc["anchor_stride"], "anchor_stride"));
  }
  if (doc.contains("max_iter")) o.max_iter = static_cast<int>(integer(doc["max_iter"], "max_iter"));
  if (doc.contains("tol")) o.tol = number(doc["tol"], "tol");
  if (doc.contains("starts")) o.n_starts = static_cast<int>(integer(doc["starts"], "starts"));
  if (doc.contains("init_smoothing")) o.init_smoothing = number(doc["init_smoothing"], "init_smoothing");
  validate(o);
  return o;
}

BenchmarkConfig benchmark_from_json(const json& doc, const std::filesystem::path& base_dir) {
  static const std::set<std::string> known = {"replicates", "master_seed", "decoders", "data", "models"};
  if (!doc.is_object()) parse_fail("benchmark config must be a JSON object");
  for (const auto& [key, value] : doc.items())
    if (!known.count(key)) parse_fail("unknown benchmark setting \"" + key + "\"");

  BenchmarkConfig config;
  if (doc.contains("replicates")) config.replicates = static_cast<int>(integer(doc["replicates"], "replicates"));
  if (doc.contains("master_seed")) {
    if (!doc["master_seed"].is_number_unsigned()) parse_fail("master_seed must be a non-negative integer");
    config.master_seed = doc["master_seed"].get<std::uint64_t>();
  }
  if (doc.contains("decoders")) {
    config.decoders.clear();
    const json& d = doc["decoders"];
    if (!d.is_array()) parse_fail("decoders must be an array");
    for (const auto& name : d) config.decoders.push_back(parse_decoder(text(name, "decoders[]")));
  }
  config.source = doc.contains("data") ? simulation_from_json(doc["data"], base_dir)
                                       : std::variant<RegionScheme, SimulationModel>(default_desk_scheme());

  const json& models = field(doc, "models", "benchmark config");
  if (!models.is_array() || models.empty()) parse_fail("models must be a non-empty array");
  for (std::size_t i = 0; i < models.size(); ++i) {
    const json& m = models[i];
    const std::string ctx = "models[" + std::to_string(i) + "]";
    ModelConfig base;
    base.fit = fit_options_from_json(m, {"name", "k", "lambdas"});
    base.k = static_cast<int>(integer(field(m, "k", ctx), ctx + ".k"));
    base.name = m.contains("name") ? text(m["name"], ctx + ".name") : to_string(base.fit.emission.family);
    if (base.name.find_first_of(",\"\n") != std::string::npos) {
      parse_fail(ctx + ".name may not contain commas, quotes or newlines");
    }
    if (m.contains("lambdas")) {
      for (double lambda : vector_from(m["lambdas"], ctx + ".lambdas")) {
        ModelConfig c = base;
        c.fit.emission.penalty.lambda = lambda;
        validate(c.fit);
        config.models.push_back(std::move(c));
      }
    } else {
      config.models.push_back(std::move(base));
    }
  }
  validate(config);
  return config;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
    out << contents;
    out.flush();
    if (!out) throw Error(ErrorCode::InvalidArgument, "failed writing " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::InvalidArgument, "cannot replace " + path.string());
  }
}

}  // namespace nphmm
