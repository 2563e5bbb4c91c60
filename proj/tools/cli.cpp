#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>

#include <CLI11.hpp>

#include "aqsense/environment.hpp"
#include "aqsense/io.hpp"
#include "aqsense/location.hpp"
#include "aqsense/power_multi.hpp"
#include "aqsense/power_single.hpp"
#include "aqsense/schedule.hpp"
#include "aqsense/seeds.hpp"

namespace aqsense::cli {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    int quantize_bins = 0;
};

struct Stats {
    double mean = 0, stderr_ = 0;
    std::size_t n = 0;
};

Stats stats(const std::vector<double>& xs) {
    Stats s;
    s.n = xs.size();
    if (xs.empty()) return s;
    s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
    if (xs.size() > 1) {
        double ss = 0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.stderr_ = std::sqrt(ss / double(xs.size() - 1) / double(xs.size()));
    }
    return s;
}

Json stats_json(const std::vector<double>& xs) {
    const auto s = stats(xs);
    return {{"mean_J_bar", s.mean}, {"stderr", s.stderr_}, {"n", s.n}};
}

class Run {
public:
    Run(std::string command, const Options& opt) : command_(std::move(command)), start_(Clock::now()) {
        if (opt.config.empty()) throw ValidationError("--config is required");
        const fs::path cfg_path(opt.config);
        if (!fs::exists(cfg_path)) throw ValidationError("config file not found: " + cfg_path.string());
        config_ = load_json(cfg_path);
        check_schema(config_, "config");
        base_ = cfg_path.parent_path();
        seed_ = opt.seed ? *opt.seed : config_.value("seed", std::uint64_t{1});
        out_ = opt.out;
        bins_ = opt.quantize_bins;
        if (bins_ < 0) throw ValidationError("--quantize-bins must be >= 0");
        fs::create_directories(out_);
    }

    const Json& config() const { return config_; }
    const fs::path& out() const { return out_; }

    std::uint64_t seed_for(const std::string& label) {
        const auto s = derive_seed(seed_, label);
        seeds_[label] = s;
        return s;
    }

    fs::path input(const char* key) const {
        if (!config_.contains(key)) throw ValidationError(std::string("config: missing input path '") + key + "'");
        fs::path p = config_.at(key).get<std::string>();
        if (p.is_relative()) p = base_ / p;
        if (!fs::exists(p)) throw ValidationError(std::string("config: ") + key + " file not found: " + p.string());
        return p;
    }

    Json section(const char* key) const { return config_.contains(key) ? config_.at(key) : Json::object(); }

    EnvironmentModel environment() const {
        auto env = environment_from_json(load_json(input("environment")));
        return maybe_quantize(std::move(env));
    }

    EnvironmentModel maybe_quantize(EnvironmentModel env) const {
        if (bins_ > 0 && std::size_t(bins_) < env.size()) env = quantize_values(env, bins_);
        return env;
    }

    InferenceParams params() const { return params_from_json(load_json(input("params"))); }

    PlanningConfig planning() const {
        if (!config_.contains("planning")) throw ParseError("config: missing 'planning' section");
        const auto cfg = planning_from_json(config_.at("planning"));
        require_valid(cfg);
        return cfg;
    }

    bool reserve_budget() const { return section("planning").value("reserve_budget", true); }

    std::vector<std::size_t> deployed(const PlanningConfig& cfg) const {
        std::vector<std::size_t> d;
        if (config_.contains("deployed")) {
            d = config_.at("deployed").get<std::vector<std::size_t>>();
        } else {
            d.resize(std::size_t(cfg.L));
            std::iota(d.begin(), d.end(), 0);
        }
        if (d.empty() || d.size() > std::size_t(cfg.L))
            throw ValidationError("deployed: need between 1 and L locations");
        std::vector<char> seen(std::size_t(cfg.K), 0);
        for (auto k : d) {
            if (k >= seen.size() || seen[k]) throw ValidationError("deployed: locations must be distinct and < K");
            seen[k] = 1;
        }
        return d;
    }

    std::vector<Trajectory> trajectories(const EnvironmentModel& env, int T) {
        const int n = section("evaluation").value("trajectories", 20);
        if (n < 1) throw ValidationError("evaluation.trajectories must be >= 1");
        const auto base = seed_for("trajectories");
        std::vector<Trajectory> out;
        for (int i = 0; i < n; ++i) out.push_back(sample_trajectory(env, T, splitmix64(base + std::uint64_t(i))));
        return out;
    }

    void check_params(const InferenceParams& p, const PlanningConfig& cfg) const {
        if (p.locations() != cfg.K) throw ValidationError("params cover " + std::to_string(p.locations()) +
                                                          " locations but planning.K = " + std::to_string(cfg.K));
    }

    Json finish(Json results, std::ostream& out) {
        const double wall = std::chrono::duration<double>(Clock::now() - start_).count();
        Json report{{"schema_version", kSchemaVersion},
                    {"kind", "report"},
                    {"command", command_},
                    {"seed", seed_},
                    {"seeds", seeds_},
                    {"quantize_bins", bins_},
                    {"config", config_},
                    {"results", std::move(results)},
                    {"wall_time_s", wall}};
        save_json(out_ / "report.json", report);
        out << command_ << ": wrote " << (out_ / "report.json").string() << '\n';
        return report;
    }

private:
    std::string command_;
    Clock::time_point start_;
    Json config_;
    fs::path base_, out_;
    std::uint64_t seed_ = 1;
    int bins_ = 0;
    Json seeds_ = Json::object();
};

std::ofstream csv(const fs::path& path) {
    std::ofstream f(path);
    if (!f) throw ResourceError("cannot write " + path.string());
    f << std::setprecision(17);
    return f;
}

CalibrationThresholds thresholds(const Json& j) {
    CalibrationThresholds thr;
    thr.measurement_min_mu = j.value("measurement_min_mu", thr.measurement_min_mu);
    thr.pairwise_min_mu = j.value("pairwise_min_mu", thr.pairwise_min_mu);
    return thr;
}

void cmd_calibrate(const Options& opt, std::ostream& out) {
    Run run("calibrate", opt);
    const auto traces = read_traces_csv(run.input("traces"));
    const auto params = calibrate(traces, thresholds(run.section("thresholds")));
    const auto env = run.maybe_quantize(estimate_chain(traces));
    save_json(run.out() / "params.json", to_json(params));
    save_json(run.out() / "env.json", to_json(env));
    run.finish({{"sigma0_sq", params.sigma0_sq},
                {"sigma_d_sq", params.sigma_d_sq},
                {"locations", params.locations()},
                {"values", env.size()},
                {"readings", traces.readings.size()}},
               out);
}

void cmd_fit_env(const Options& opt, std::ostream& out) {
    Run run("fit-env", opt);
    const auto traces = read_traces_csv(run.input("traces"));
    const auto env = run.maybe_quantize(estimate_chain(traces));
    save_json(run.out() / "env.json", to_json(env));
    run.finish({{"values", env.size()}, {"min_value", env.values.front()}, {"max_value", env.values.back()}}, out);
}

std::size_t memory_budget(const Run& run) {
    return run.config().value("memory_budget_bytes", std::size_t(1) << 30);
}

void cmd_plan_single(const Options& opt, std::ostream& out) {
    Run run("plan-single", opt);
    const auto cfg = run.planning();
    const auto params = run.params();
    run.check_params(params, cfg);
    const auto env = run.environment();
    const auto device = run.config().value("device", std::size_t{0});
    if (device >= std::size_t(cfg.K)) throw ValidationError("device must be < K");

    const SingleDeviceMdp mdp(cfg, device, env, params, run.reserve_budget());
    const auto policy = dp_solve(mdp, memory_budget(run));
    save_policy(run.out() / "policy.bin", policy);

    std::vector<double> dp, uni;
    auto table = csv(run.out() / "results.csv");
    table << "trajectory,dp,uniform\n";
    const auto trajs = run.trajectories(env, cfg.T);
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        const auto res = run_policy(policy, mdp, trajs[i]);
        const double u = evaluate_schedule(uniform_schedule(cfg, {device}), trajs[i], params).J_bar;
        evaluate_schedule(res.schedule, trajs[i], params, cfg);
        dp.push_back(res.J_bar);
        uni.push_back(u);
        table << i << ',' << res.J_bar << ',' << u << '\n';
        if (i == 0) {
            std::ofstream sched(run.out() / "schedule.csv");
            write_schedule_csv(sched, res.schedule);
        }
    }
    const double gain = (stats(uni).mean - stats(dp).mean) / stats(uni).mean;
    run.finish({{"values", env.size()},
                {"policy_bytes", policy_memory_estimate(cfg, env.size())},
                {"expected_initial_value", expected_initial_value(policy, mdp)},
                {"dp", stats_json(dp)},
                {"uniform", stats_json(uni)},
                {"relative_improvement", gain}},
               out);
}

TrainConfig train_config(Run& run) {
    auto tc = train_config_from_json(run.section("train"));
    tc.seed = run.seed_for("train");
    tc.eval_seed = run.seed_for("train-eval");
    return tc;
}

void write_train_log(const fs::path& path, const std::vector<TrainLogRow>& log) {
    auto f = csv(path);
    f << "episode,epsilon,rollout_J_bar,batch_mse\n";
    for (const auto& r : log) f << r.episode << ',' << r.epsilon << ',' << r.rollout_J_bar << ',' << r.batch_mse << '\n';
}

void cmd_train_multi(const Options& opt, std::ostream& out) {
    Run run("train-multi", opt);
    const auto cfg = run.planning();
    const auto params = run.params();
    run.check_params(params, cfg);
    const auto env = run.environment();
    const MultiDeviceMdp mdp(cfg, run.deployed(cfg), env, params, run.reserve_budget());

    std::vector<TrainLogRow> log;
    const auto tc = train_config(run);
    const auto q = q_learning_train(mdp, tc, &log);
    save_json(run.out() / "qnet.json", to_json(q));
    write_train_log(run.out() / "train_log.csv", log);

    std::vector<double> greedy, random;
    auto table = csv(run.out() / "results.csv");
    table << "trajectory,q_learning,random\n";
    const auto trajs = run.trajectories(env, cfg.T);
    const auto rseed = run.seed_for("random-policy");
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        greedy.push_back(greedy_rollout(q, mdp, trajs[i]).J_bar);
        random.push_back(random_rollout(mdp, trajs[i], splitmix64(rseed + i)).J_bar);
        table << i << ',' << greedy.back() << ',' << random.back() << '\n';
    }
    run.finish({{"train", to_json(tc)},
                {"episodes_logged", log.size()},
                {"final_batch_mse", log.empty() ? 0.0 : log.back().batch_mse},
                {"q_learning", stats_json(greedy)},
                {"random", stats_json(random)}},
               out);
}

void cmd_select_locations(const Options& opt, std::ostream& out) {
    Run run("select-locations", opt);
    const auto cfg = run.planning();
    const auto params = run.params();
    run.check_params(params, cfg);
    const auto env = run.environment();
    const auto ga = ga_config_from_json(run.section("ga"));
    validate(ga);

    std::vector<std::size_t> rows(std::size_t(cfg.L));
    std::iota(rows.begin(), rows.end(), 0);
    const PhiMatrix power = uniform_schedule(cfg, rows).phi.topRows(cfg.L);
    const auto mu = sample_trajectory(env, cfg.T, run.seed_for("fitness-trajectory"));
    const auto result = select_locations(params, cfg.L, ga, make_schedule_evaluator(power, mu, params), run.seed_for("ga"));

    Json genes = to_json(result.evolution.pool);
    genes["history"] = result.evolution.history;
    genes["best"] = to_json(result.evolution.best);
    save_json(run.out() / "genes.json", genes);
    auto hist = csv(run.out() / "history.csv");
    hist << "round,best_J_bar\n";
    for (std::size_t r = 0; r < result.evolution.history.size(); ++r) hist << r << ',' << result.evolution.history[r] << '\n';

    Json clusters = Json::array();
    for (const auto& c : result.clustering.clusters) clusters.push_back(c);
    run.finish({{"ga", to_json(ga)},
                {"best_locations", result.evolution.best.locations()},
                {"best_J_bar", *result.evolution.best.fitness},
                {"rounds", result.evolution.rounds},
                {"history", result.evolution.history},
                {"delta_applied", result.difference.delta_applied},
                {"embedding_residual", result.embedding.residual},
                {"clusters", clusters}},
               out);
}

void cmd_evaluate(const Options& opt, std::ostream& out) {
    Run run("evaluate", opt);
    const auto cfg = run.planning();
    const auto params = run.params();
    run.check_params(params, cfg);
    const auto env = run.environment();
    const auto deployed = run.deployed(cfg);
    const auto eval = run.section("evaluation");
    const auto names = eval.value("strategies", std::vector<std::string>{"uniform", "random"});

    const MultiDeviceMdp multi(cfg, deployed, env, params, run.reserve_budget());
    std::optional<SingleDeviceMdp> single;
    std::optional<PolicyTable> policy;
    std::optional<QNetwork> qnet;
    for (const auto& name : names) {
        if (name == "dp") {
            if (deployed.size() != 1) throw ValidationError("strategy dp needs exactly one deployed device");
            single.emplace(cfg, deployed[0], env, params, run.reserve_budget());
            policy = run.config().contains("policy") ? load_policy(run.input("policy")) : dp_solve(*single, memory_budget(run));
        } else if (name == "q-learning") {
            qnet = run.config().contains("qnet") ? qnetwork_from_json(load_json(run.input("qnet")))
                                                 : q_learning_train(multi, train_config(run));
        } else if (name != "uniform" && name != "random") {
            throw ValidationError("unknown strategy '" + name + "' (uniform, dp, q-learning, random)");
        }
    }

    const auto trajs = run.trajectories(env, cfg.T);
    const auto rseed = run.seed_for("random-policy");
    std::map<std::string, std::vector<double>> results;
    auto table = csv(run.out() / "results.csv");
    table << "trajectory,strategy,J_bar\n";
    for (std::size_t i = 0; i < trajs.size(); ++i)
        for (const auto& name : names) {
            double j = 0;
            if (name == "uniform") j = evaluate_schedule(uniform_schedule(cfg, deployed), trajs[i], params).J_bar;
            else if (name == "dp") j = run_policy(*policy, *single, trajs[i]).J_bar;
            else if (name == "q-learning") j = greedy_rollout(*qnet, multi, trajs[i]).J_bar;
            else j = random_rollout(multi, trajs[i], splitmix64(rseed + i)).J_bar;
            results[name].push_back(j);
            table << i << ',' << name << ',' << j << '\n';
        }
    Json summary = Json::object();
    for (const auto& name : names) summary[name] = stats_json(results[name]);
    run.finish({{"strategies", summary}, {"deployed", deployed}}, out);
}

void cmd_simulate(const Options& opt, std::ostream& out) {
    Run run("simulate", opt);
    const auto sim = run.section("simulate");
    EnvironmentModel env;
    if (run.config().contains("environment")) {
        env = run.environment();
    } else {
        const auto values = sim.value("values", std::vector<int>{});
        if (values.size() < 2) throw ValidationError("simulate: need an environment file or at least two values");
        env = kernel_chain(values, sim.value("bandwidth", 5.0));
    }
    const int slots = sim.value("slots", 1000);
    const int K = sim.value("locations", 6);
    const std::string model = sim.value("model", std::string("location"));
    if (slots < 2 || K < 2) throw ValidationError("simulate: need slots >= 2 and locations >= 2");

    const auto mu = sample_trajectory(env, slots - 1, run.seed_for("trajectory"));
    Eigen::MatrixXd y;
    Json truth{{"schema_version", kSchemaVersion}, {"kind", "simulation_truth"}, {"model", model}};
    if (model == "measurement") {
        const double s0 = sim.value("sigma0_sq", 0.0037);
        y = measurement_noise_traces(mu, K, s0, run.seed_for("noise"));
        truth["sigma0_sq"] = s0;
    } else if (model == "location") {
        const auto lm = random_location_model(K, run.seed_for("location-model"));
        y = location_model_traces(mu, lm, run.seed_for("noise"));
        truth["offsets"] = std::vector<double>(lm.offsets.data(), lm.offsets.data() + K);
        truth["noise_var"] = std::vector<double>(lm.noise_var.data(), lm.noise_var.data() + K);
        const auto implied = lm.implied_params(0.0, 0.0);
        truth["mu_pair"] = to_json(implied)["mu_pair"];
        truth["sigma_pair_sq"] = to_json(implied)["sigma_pair_sq"];
    } else {
        throw ValidationError("simulate: model must be 'location' or 'measurement'");
    }
    truth["trajectory"] = mu;
    write_traces_csv(run.out() / "traces.csv", TraceSet::from_dense(y));
    save_json(run.out() / "env.json", to_json(env));
    save_json(run.out() / "truth.json", truth);
    run.finish({{"slots", slots}, {"locations", K}, {"model", model}, {"values", env.size()}}, out);
}

int code_of(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Validation: return kValidation;
        case ErrorKind::Parse: return kParse;
        case ErrorKind::Resource: return kResource;
        case ErrorKind::Domain: return kDomain;
        case ErrorKind::InsufficientData: return kInsufficientData;
        case ErrorKind::DegenerateInput: return kDegenerateInput;
    }
    return kFailure;
}

const char* name_of(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Validation: return "validation";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::Resource: return "resource";
        case ErrorKind::Domain: return "domain";
        case ErrorKind::InsufficientData: return "insufficient-data";
        case ErrorKind::DegenerateInput: return "degenerate-input";
    }
    return "error";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Energy-aware air-quality sensing: calibration, power control and location selection"};
    app.name("aqsense");
    app.require_subcommand(1);
    Options opt;

    using Handler = void (*)(const Options&, std::ostream&);
    const std::vector<std::tuple<std::string, std::string, Handler>> commands{
        {"calibrate", "Fit inference parameters and the value chain from a trace CSV", cmd_calibrate},
        {"fit-env", "Fit only the value chain from a trace CSV", cmd_fit_env},
        {"plan-single", "Solve the single-device power-control policy by dynamic programming", cmd_plan_single},
        {"train-multi", "Train the multi-device Q-network", cmd_train_multi},
        {"select-locations", "Choose deployment locations with the genetic search", cmd_select_locations},
        {"evaluate", "Compare strategies on shared trajectories", cmd_evaluate},
        {"simulate", "Generate synthetic traces", cmd_simulate},
    };
    Handler chosen = nullptr;
    for (const auto& [name, help, handler] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opt.config, "JSON configuration")->required();
        sub->add_option("--seed", opt.seed, "Master seed (overrides the config)");
        sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
        sub->add_option("--quantize-bins", opt.quantize_bins, "Merge the value space into this many bins (0 = off)");
        sub->callback([&chosen, h = handler] { chosen = h; });
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        chosen(opt, out);
        return kOk;
    } catch (const Error& e) {
        err << "error[" << name_of(e.kind()) << "]: " << e.what() << '\n';
        return code_of(e.kind());
    } catch (const nlohmann::json::exception& e) {
        err << "error[parse]: " << e.what() << '\n';
        return kParse;
    } catch (const fs::filesystem_error& e) {
        err << "error[resource]: " << e.what() << '\n';
        return kResource;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
}

}  // namespace aqsense::cli
