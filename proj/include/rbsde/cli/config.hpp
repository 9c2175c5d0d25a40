#pragma once

// Experiment configuration read from JSON. Every object is checked against a
// fixed key set; the first offending entry is reported as a JSON pointer.

#include "rbsde/driver.hpp"
#include "rbsde/error.hpp"
#include "rbsde/lattice.hpp"
#include "rbsde/obstacle_builders.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace rbsde::cli {

using json = nlohmann::json;

inline const std::set<std::string>& known_commands() {
    static const std::set<std::string> names{"solve", "oracle", "penalize", "stop", "risk", "glcheck", "sweep"};
    return names;
}

struct DriverSpec {
    std::string name = "zero";
    DriverParams params;
};

struct RunSpec {
    std::string command = "solve";
    double beta = 25.0;
    std::optional<double> picard_epsilon;
    double picard_tol = 1e-10;
    std::size_t max_iter = 500;
    std::vector<double> epsilons{1.0, 0.1, 0.01};
    std::vector<double> n_list{1.0, 10.0, 100.0, 1000.0, 1e6};
    std::vector<double> betas{0.0, 1.0, 5.0};
    std::vector<std::size_t> nodes;  ///< empty: every internal node
    double tolerance = 1e-12;
    std::uint64_t seed = 0;
    std::size_t instances = 50;
    std::size_t max_steps = 3;
    std::optional<ObstacleSpec> second_obstacle;
    double lift = 0.5;
};

struct ExperimentConfig {
    LatticeSpec lattice;
    ObstacleSpec obstacle;
    DriverSpec driver;
    RunSpec run;
    std::string prefix;  ///< output file stem; defaults to the command name
    json echo;           ///< the document as read
};

namespace detail {

[[noreturn]] inline void invalid(const std::string& path, const std::string& what) {
    throw Error(ErrorCode::ConfigInvalid, (path.empty() ? "/" : path) + ": " + what);
}

inline void only_keys(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) invalid(path, "expected an object");
    for (const auto& [k, v] : obj.items()) {
        bool ok = false;
        for (const char* key : keys) ok = ok || k == key;
        if (!ok) invalid(path + "/" + k, "unknown key");
    }
}

inline double number(const json& j, const std::string& path) {
    if (!j.is_number()) invalid(path, "expected a number");
    const double x = j.get<double>();
    if (!std::isfinite(x)) invalid(path, "not finite");
    return x;
}

inline std::size_t count(const json& j, const std::string& path) {
    if (!j.is_number_integer() || j.get<std::int64_t>() < 0) invalid(path, "expected a non-negative integer");
    return j.get<std::size_t>();
}

inline std::string text(const json& j, const std::string& path) {
    if (!j.is_string()) invalid(path, "expected a string");
    return j.get<std::string>();
}

template <class F>
auto list(const json& j, const std::string& path, F&& each) {
    if (!j.is_array()) invalid(path, "expected an array");
    std::vector<decltype(each(j, path))> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(each(j[i], path + "/" + std::to_string(i)));
    return out;
}

inline std::map<std::string, double> number_map(const json& j, const std::string& path) {
    if (!j.is_object()) invalid(path, "expected an object of numbers");
    std::map<std::string, double> out;
    for (const auto& [k, v] : j.items()) out[k] = number(v, path + "/" + k);
    return out;
}

inline LatticeSpec read_lattice(const json& j, const std::string& path) {
    only_keys(j, path, {"steps", "horizon", "brownian", "marks", "times", "max_nodes"});
    LatticeSpec spec;
    if (!j.contains("steps")) invalid(path + "/steps", "required");
    spec.steps = count(j["steps"], path + "/steps");
    if (j.contains("horizon")) spec.horizon = number(j["horizon"], path + "/horizon");
    if (j.contains("brownian")) {
        const auto b = text(j["brownian"], path + "/brownian");
        if (b == "binary") spec.brownian = BrownianScheme::binary;
        else if (b == "trinomial") spec.brownian = BrownianScheme::trinomial;
        else invalid(path + "/brownian", "expected \"binary\" or \"trinomial\"");
    }
    if (j.contains("times")) spec.times = list(j["times"], path + "/times", number);
    if (j.contains("max_nodes")) spec.max_nodes = count(j["max_nodes"], path + "/max_nodes");
    if (j.contains("marks")) {
        auto marks = list(j["marks"], path + "/marks", [](const json& m, const std::string& p) {
            only_keys(m, p, {"label", "size", "intensity"});
            for (const char* key : {"label", "size", "intensity"})
                if (!m.contains(key)) invalid(p + "/" + key, "required");
            Mark mark{text(m["label"], p + "/label"), number(m["size"], p + "/size"),
                      number(m["intensity"], p + "/intensity")};
            if (mark.intensity < 0.0) invalid(p + "/intensity", "intensity must be non-negative");
            return mark;
        });
        try {
            spec.marks = MarkSpace(std::move(marks));
        } catch (const Error& e) {
            invalid(path + "/marks", e.what());
        }
    }
    return spec;
}

inline ObstacleSpec read_obstacle(const json& j, const std::string& path) {
    only_keys(j, path, {"builder", "params", "times", "node_values"});
    ObstacleSpec spec;
    if (j.contains("builder")) spec.builder = text(j["builder"], path + "/builder");
    if (j.contains("params")) spec.params = number_map(j["params"], path + "/params");
    if (j.contains("times")) spec.times = list(j["times"], path + "/times", count);
    if (j.contains("node_values"))
        spec.node_values = list(j["node_values"], path + "/node_values", [](const json& e, const std::string& p) {
            if (!e.is_array() || e.size() != 2) invalid(p, "expected [v, vplus]");
            return std::pair{number(e[0], p + "/0"), number(e[1], p + "/1")};
        });
    return spec;
}

inline DriverSpec read_driver(const json& j, const std::string& path) {
    only_keys(j, path, {"name", "params"});
    DriverSpec spec;
    if (j.contains("name")) spec.name = text(j["name"], path + "/name");
    if (j.contains("params")) spec.params = number_map(j["params"], path + "/params");
    return spec;
}

inline RunSpec read_run(const json& j, const std::string& path) {
    only_keys(j, path, {"command", "beta", "picard_epsilon", "picard_tol", "max_iter", "epsilons", "n_list",
                        "betas", "nodes", "tolerance", "seed", "instances", "max_steps", "second_obstacle",
                        "lift"});
    RunSpec run;
    if (j.contains("command")) {
        run.command = text(j["command"], path + "/command");
        if (!known_commands().count(run.command)) invalid(path + "/command", "unknown command '" + run.command + "'");
    }
    const auto positive = [&](const char* key, double& dst) {
        if (!j.contains(key)) return;
        dst = number(j[key], path + "/" + key);
        if (!(dst > 0.0)) invalid(path + "/" + key, "must be positive");
    };
    if (j.contains("beta")) {
        run.beta = number(j["beta"], path + "/beta");
        if (run.beta < 0.0) invalid(path + "/beta", "must be non-negative");
    }
    if (j.contains("picard_epsilon")) {
        double e = 0.0;
        positive("picard_epsilon", e);
        run.picard_epsilon = e;
    }
    positive("picard_tol", run.picard_tol);
    positive("tolerance", run.tolerance);
    if (j.contains("max_iter")) run.max_iter = count(j["max_iter"], path + "/max_iter");
    if (j.contains("epsilons")) run.epsilons = list(j["epsilons"], path + "/epsilons", number);
    for (std::size_t i = 0; i < run.epsilons.size(); ++i)
        if (!(run.epsilons[i] > 0.0)) invalid(path + "/epsilons/" + std::to_string(i), "must be positive");
    if (j.contains("n_list")) run.n_list = list(j["n_list"], path + "/n_list", number);
    for (std::size_t i = 0; i < run.n_list.size(); ++i)
        if (!(run.n_list[i] > 0.0) || (i > 0 && !(run.n_list[i] > run.n_list[i - 1])))
            invalid(path + "/n_list/" + std::to_string(i), "penalty levels must be positive and increasing");
    if (j.contains("betas")) run.betas = list(j["betas"], path + "/betas", number);
    for (std::size_t i = 0; i < run.betas.size(); ++i)
        if (run.betas[i] < 0.0) invalid(path + "/betas/" + std::to_string(i), "must be non-negative");
    if (j.contains("nodes")) run.nodes = list(j["nodes"], path + "/nodes", count);
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) invalid(path + "/seed", "expected an unsigned integer");
        run.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("instances")) run.instances = count(j["instances"], path + "/instances");
    if (j.contains("max_steps")) {
        run.max_steps = count(j["max_steps"], path + "/max_steps");
        if (run.max_steps < 1 || run.max_steps > 4) invalid(path + "/max_steps", "must lie in 1..4");
    }
    if (j.contains("second_obstacle")) run.second_obstacle = read_obstacle(j["second_obstacle"], path + "/second_obstacle");
    if (j.contains("lift")) {
        run.lift = number(j["lift"], path + "/lift");
        if (run.lift < 0.0) invalid(path + "/lift", "must be non-negative");
    }
    return run;
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& doc) {
    using namespace detail;
    only_keys(doc, "", {"lattice", "obstacle", "driver", "run", "output"});
    ExperimentConfig cfg;
    cfg.echo = doc;
    if (!doc.contains("lattice")) invalid("/lattice", "required");
    cfg.lattice = read_lattice(doc["lattice"], "/lattice");
    if (doc.contains("obstacle")) cfg.obstacle = read_obstacle(doc["obstacle"], "/obstacle");
    if (doc.contains("driver")) cfg.driver = read_driver(doc["driver"], "/driver");
    if (doc.contains("run")) cfg.run = read_run(doc["run"], "/run");
    if (doc.contains("output")) {
        only_keys(doc["output"], "/output", {"prefix"});
        if (doc["output"].contains("prefix")) cfg.prefix = text(doc["output"]["prefix"], "/output/prefix");
    }
    if (cfg.prefix.empty()) cfg.prefix = cfg.run.command;
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot open " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ConfigInvalid, path + ": " + e.what());
    }
    return parse_config(doc);
}

}  // namespace rbsde::cli
