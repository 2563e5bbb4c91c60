#include "aqsense/io.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace aqsense {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& field, int line, const char* name) {
    T v{};
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, v);
    if (ec != std::errc() || ptr != end || field.empty())
        throw ParseError("line " + std::to_string(line) + ": invalid " + name + " '" + field + "'");
    return v;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) throw ParseError("cannot open " + path.string());
    return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, mode);
    if (!out) throw ResourceError("cannot write " + path.string());
    return out;
}

template <typename T>
T field(const Json& j, const char* key, const std::string& what) {
    if (!j.contains(key)) throw ParseError(what + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(what + ": field '" + key + "': " + e.what());
    }
}

template <typename T>
void optional_field(const Json& j, const char* key, T& into, const std::string& what) {
    if (j.contains(key)) into = field<T>(j, key, what);
}

Json matrix_json(const Eigen::MatrixXd& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from(const Json& j, const std::string& what) {
    if (!j.is_array()) throw ParseError(what + ": expected an array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        if (!j[std::size_t(i)].is_array() || static_cast<Eigen::Index>(j[std::size_t(i)].size()) != cols)
            throw ParseError(what + ": ragged matrix");
        for (Eigen::Index c = 0; c < cols; ++c) {
            const auto& v = j[std::size_t(i)][std::size_t(c)];
            if (!v.is_number()) throw ParseError(what + ": non-numeric entry");
            m(i, c) = v.get<double>();
        }
    }
    return m;
}

Json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from(const Json& j, const std::string& what) {
    std::vector<double> v;
    try {
        v = j.get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(what + ": " + e.what());
    }
    return Eigen::Map<Eigen::VectorXd>(v.data(), Eigen::Index(v.size()));
}

template <typename T>
void put(std::ostream& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    char buf[sizeof(T)];
    if (!in.read(buf, sizeof(T))) throw ParseError("policy file truncated");
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

constexpr char kPolicyMagic[4] = {'A', 'Q', 'P', 'T'};

}  // namespace

TraceSet read_traces_csv(std::istream& in) {
    TraceSet ts;
    std::string line;
    int n = 0;
    bool header = false;
    std::set<std::pair<int, int>> seen;
    while (std::getline(in, line)) {
        ++n;
        const auto text = trim(line);
        if (text.empty()) continue;
        if (!header) {
            std::string compact;
            for (char c : text)
                if (c != ' ' && c != '\t') compact.push_back(c);
            if (compact != "t,location,value")
                throw ParseError("line " + std::to_string(n) + ": expected header 't,location,value'");
            header = true;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(text);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
        if (text.back() == ',') cells.emplace_back();
        if (cells.size() != 3)
            throw ParseError("line " + std::to_string(n) + ": expected 3 fields, got " + std::to_string(cells.size()));
        Reading r;
        r.t = parse_number<int>(cells[0], n, "slot");
        r.location = parse_number<int>(cells[1], n, "location");
        r.value = parse_number<double>(cells[2], n, "value");
        if (r.t < 0 || r.location < 0) throw ParseError("line " + std::to_string(n) + ": negative slot or location");
        if (!std::isfinite(r.value)) throw ParseError("line " + std::to_string(n) + ": non-finite value");
        if (!seen.insert({r.t, r.location}).second)
            throw ParseError("line " + std::to_string(n) + ": duplicate reading for slot " + std::to_string(r.t) +
                             ", location " + std::to_string(r.location));
        ts.readings.push_back(r);
    }
    if (!header) throw ParseError("line " + std::to_string(n + 1) + ": empty trace file");
    return ts;
}

TraceSet read_traces_csv(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_traces_csv(in);
}

void write_traces_csv(std::ostream& out, const TraceSet& traces) {
    out << "t,location,value\n" << std::setprecision(17);
    for (const auto& r : traces.readings) out << r.t << ',' << r.location << ',' << r.value << '\n';
}

void write_traces_csv(const std::filesystem::path& path, const TraceSet& traces) {
    auto out = open_out(path);
    write_traces_csv(out, traces);
}

Json load_json(const std::filesystem::path& path) {
    auto in = open_in(path);
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void save_json(const std::filesystem::path& path, const Json& j) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

void check_schema(const Json& j, const std::string& what) {
    if (!j.is_object()) throw ParseError(what + ": expected a JSON object");
    const int v = field<int>(j, "schema_version", what);
    if (v != kSchemaVersion) throw ParseError(what + ": unsupported schema_version " + std::to_string(v));
}

Json to_json(const EnvironmentModel& env) {
    return {{"schema_version", kSchemaVersion},
            {"kind", "environment"},
            {"values", env.values},
            {"stationary", vector_json(env.stationary)},
            {"transition", matrix_json(env.transition)}};
}

EnvironmentModel environment_from_json(const Json& j) {
    check_schema(j, "environment");
    EnvironmentModel env;
    env.values = field<std::vector<int>>(j, "values", "environment");
    env.stationary = vector_from(j.at("stationary"), "environment.stationary");
    env.transition = matrix_from(j.at("transition"), "environment.transition");
    try {
        validate(env);
    } catch (const DomainError& e) {
        throw ParseError(std::string("environment: ") + e.what());
    }
    return env;
}

Json to_json(const InferenceParams& p) {
    return {{"schema_version", kSchemaVersion},
            {"kind", "inference_params"},
            {"sigma0_sq", p.sigma0_sq},
            {"sigma_d_sq", p.sigma_d_sq},
            {"mu_pair", matrix_json(p.mu_pair)},
            {"sigma_pair_sq", matrix_json(p.sigma_pair_sq)}};
}

InferenceParams params_from_json(const Json& j) {
    check_schema(j, "params");
    InferenceParams p;
    p.sigma0_sq = field<double>(j, "sigma0_sq", "params");
    p.sigma_d_sq = field<double>(j, "sigma_d_sq", "params");
    if (!j.contains("mu_pair") || !j.contains("sigma_pair_sq")) throw ParseError("params: missing pair tables");
    p.mu_pair = matrix_from(j.at("mu_pair"), "params.mu_pair");
    p.sigma_pair_sq = matrix_from(j.at("sigma_pair_sq"), "params.sigma_pair_sq");
    try {
        validate(p);
    } catch (const DomainError& e) {
        throw ParseError(std::string("params: ") + e.what());
    }
    return p;
}

Json to_json(const PlanningConfig& c) {
    return {{"K", c.K}, {"L", c.L}, {"T", c.T}, {"E", c.E}, {"delta_T", c.delta_T}};
}

PlanningConfig planning_from_json(const Json& j) {
    const std::string w = "planning";
    return {field<int>(j, "K", w), field<int>(j, "L", w), field<int>(j, "T", w), field<int>(j, "E", w),
            field<int>(j, "delta_T", w)};
}

Json to_json(const TrainConfig& tc) {
    return {{"episodes", tc.episodes},
            {"batch", tc.batch},
            {"epsilon_start", tc.epsilon_start},
            {"epsilon_end", tc.epsilon_end},
            {"gamma", tc.gamma},
            {"learning_rate", tc.learning_rate},
            {"seed", tc.seed},
            {"buffer_capacity", tc.buffer_capacity},
            {"steps_per_episode", tc.steps_per_episode},
            {"bootstrap_episodes", tc.bootstrap_episodes},
            {"bootstrap_epochs", tc.bootstrap_epochs},
            {"eval_seed", tc.eval_seed}};
}

TrainConfig train_config_from_json(const Json& j, TrainConfig tc) {
    const std::string w = "train";
    optional_field(j, "episodes", tc.episodes, w);
    optional_field(j, "batch", tc.batch, w);
    optional_field(j, "epsilon_start", tc.epsilon_start, w);
    optional_field(j, "epsilon_end", tc.epsilon_end, w);
    optional_field(j, "gamma", tc.gamma, w);
    optional_field(j, "learning_rate", tc.learning_rate, w);
    optional_field(j, "seed", tc.seed, w);
    optional_field(j, "buffer_capacity", tc.buffer_capacity, w);
    optional_field(j, "steps_per_episode", tc.steps_per_episode, w);
    optional_field(j, "bootstrap_episodes", tc.bootstrap_episodes, w);
    optional_field(j, "bootstrap_epochs", tc.bootstrap_epochs, w);
    optional_field(j, "eval_seed", tc.eval_seed, w);
    return tc;
}

Json to_json(const GAConfig& c) {
    return {{"H", c.H}, {"H1", c.H1}, {"H2", c.H2}, {"M", c.M}, {"p_m", c.p_m}, {"W", c.W}, {"stall", c.stall}};
}

GAConfig ga_config_from_json(const Json& j, GAConfig c) {
    const std::string w = "ga";
    optional_field(j, "H", c.H, w);
    optional_field(j, "H1", c.H1, w);
    optional_field(j, "H2", c.H2, w);
    optional_field(j, "M", c.M, w);
    optional_field(j, "p_m", c.p_m, w);
    optional_field(j, "W", c.W, w);
    optional_field(j, "stall", c.stall, w);
    return c;
}

Json to_json(const Schedule& s) {
    Json rows = Json::array();
    for (Eigen::Index k = 0; k < s.phi.rows(); ++k) {
        std::string row(std::size_t(s.phi.cols()), '0');
        for (Eigen::Index t = 0; t < s.phi.cols(); ++t)
            if (s.phi(k, t)) row[std::size_t(t)] = '1';
        rows.push_back(row);
    }
    return {{"schema_version", kSchemaVersion}, {"kind", "schedule"}, {"deployed", s.deployed}, {"phi", rows}};
}

Schedule schedule_from_json(const Json& j) {
    check_schema(j, "schedule");
    Schedule s;
    s.deployed = field<std::vector<std::size_t>>(j, "deployed", "schedule");
    const auto rows = field<std::vector<std::string>>(j, "phi", "schedule");
    const auto cols = rows.empty() ? std::size_t(0) : rows[0].size();
    s.phi = PhiMatrix::Zero(Eigen::Index(rows.size()), Eigen::Index(cols));
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k].size() != cols) throw ParseError("schedule: ragged phi rows");
        for (std::size_t t = 0; t < cols; ++t) {
            const char c = rows[k][t];
            if (c != '0' && c != '1') throw ParseError("schedule: phi entries must be 0 or 1");
            s.phi(Eigen::Index(k), Eigen::Index(t)) = c == '1';
        }
    }
    return s;
}

void write_schedule_csv(std::ostream& out, const Schedule& s) {
    out << "location,deployed";
    for (Eigen::Index t = 0; t < s.phi.cols(); ++t) out << ",t" << t;
    out << '\n';
    for (Eigen::Index k = 0; k < s.phi.rows(); ++k) {
        const bool dep = std::find(s.deployed.begin(), s.deployed.end(), std::size_t(k)) != s.deployed.end();
        out << k << ',' << int(dep);
        for (Eigen::Index t = 0; t < s.phi.cols(); ++t) out << ',' << int(s.phi(k, t));
        out << '\n';
    }
}

Json to_json(const QNetwork& q) {
    const auto params = q.net.parameters();
    return {{"schema_version", kSchemaVersion},
            {"kind", "q_network"},
            {"K", q.scaler.layout().K},
            {"L", q.scaler.layout().L},
            {"sizes", q.net.sizes()},
            {"parameters", vector_json(params)},
            {"scaler_lower", vector_json(q.scaler.lower())},
            {"scaler_upper", vector_json(q.scaler.upper())},
            {"output_scale", q.output_scale}};
}

namespace {

// nlohmann writes non-finite doubles as null; untouched scaler bounds are +-inf.
Eigen::VectorXd bounds_from(const Json& j, double missing, const std::string& what) {
    if (!j.is_array()) throw ParseError(what + ": expected an array");
    Eigen::VectorXd v(Eigen::Index(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (j[i].is_null()) v(Eigen::Index(i)) = missing;
        else if (j[i].is_number()) v(Eigen::Index(i)) = j[i].get<double>();
        else throw ParseError(what + ": non-numeric entry");
    }
    return v;
}

}  // namespace

QNetwork qnetwork_from_json(const Json& j) {
    check_schema(j, "q_network");
    const std::string w = "q_network";
    const FeatureLayout layout{field<int>(j, "K", w), field<int>(j, "L", w)};
    QNetwork q;
    const auto sizes = field<std::vector<int>>(j, "sizes", w);
    if (sizes != q_network_sizes(layout.K, layout.L)) throw ParseError("q_network: layer sizes do not match K and L");
    q.net = Mlp<double>(sizes);
    const auto params = vector_from(j.at("parameters"), "q_network.parameters");
    if (params.size() != q.net.parameter_count()) throw ParseError("q_network: wrong parameter count");
    q.net.set_parameters(params);
    q.scaler = FeatureScaler(layout);
    const double inf = std::numeric_limits<double>::infinity();
    q.scaler.lower() = bounds_from(j.at("scaler_lower"), inf, "q_network.scaler_lower");
    q.scaler.upper() = bounds_from(j.at("scaler_upper"), -inf, "q_network.scaler_upper");
    if (q.scaler.lower().size() != layout.size() || q.scaler.upper().size() != layout.size())
        throw ParseError("q_network: scaler size mismatch");
    q.output_scale = field<double>(j, "output_scale", w);
    return q;
}

Json to_json(const Gene& g) {
    std::string bits(g.bits.size(), '0');
    for (std::size_t k = 0; k < g.bits.size(); ++k)
        if (g.bits[k]) bits[k] = '1';
    Json out{{"bits", bits}, {"locations", g.locations()}};
    out["fitness"] = g.fitness ? Json(*g.fitness) : Json(nullptr);
    return out;
}

Gene gene_from_json(const Json& j) {
    const auto bits = field<std::string>(j, "bits", "gene");
    Gene g;
    for (char c : bits) {
        if (c != '0' && c != '1') throw ParseError("gene: bits must be 0 or 1");
        g.bits.push_back(c == '1');
    }
    if (j.contains("fitness") && !j.at("fitness").is_null()) g.fitness = field<double>(j, "fitness", "gene");
    return g;
}

Json to_json(const GenePool& pool) {
    Json genes = Json::array();
    for (const auto& g : pool) genes.push_back(to_json(g));
    return {{"schema_version", kSchemaVersion}, {"kind", "gene_pool"}, {"genes", genes}};
}

GenePool gene_pool_from_json(const Json& j) {
    check_schema(j, "gene_pool");
    GenePool pool;
    if (!j.contains("genes") || !j.at("genes").is_array()) throw ParseError("gene_pool: missing genes");
    for (const auto& g : j.at("genes")) pool.push_back(gene_from_json(g));
    return pool;
}

void save_policy(const std::filesystem::path& path, const PolicyTable& policy) {
    auto out = open_out(path, std::ios::out | std::ios::binary);
    out.write(kPolicyMagic, 4);
    put<std::uint32_t>(out, 1);
    put<std::int32_t>(out, policy.horizon());
    put<std::int32_t>(out, policy.budget());
    put<std::int32_t>(out, policy.max_sleep());
    put<std::uint64_t>(out, policy.value_count());
    for (double v : policy.values()) put(out, v);
    out.write(reinterpret_cast<const char*>(policy.actions().data()), std::streamsize(policy.actions().size()));
    if (!out) throw ResourceError("failed writing " + path.string());
}

PolicyTable load_policy(const std::filesystem::path& path) {
    auto in = open_in(path, std::ios::in | std::ios::binary);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kPolicyMagic, 4) != 0) throw ParseError(path.string() + ": not a policy file");
    if (get<std::uint32_t>(in) != 1) throw ParseError(path.string() + ": unsupported policy version");
    const int T = get<std::int32_t>(in), E = get<std::int32_t>(in), dT = get<std::int32_t>(in);
    const auto n = get<std::uint64_t>(in);
    if (T < 1 || E < 0 || dT < 1 || n < 1) throw ParseError(path.string() + ": invalid policy header");
    PolicyTable policy(T, E, dT, std::size_t(n));
    for (auto& v : policy.values()) v = get<double>(in);
    if (!in.read(reinterpret_cast<char*>(policy.actions().data()), std::streamsize(policy.actions().size())))
        throw ParseError(path.string() + ": policy file truncated");
    return policy;
}

}  // namespace aqsense
