#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "caver/attention.hpp"
#include "caver/cost_model.hpp"
#include "caver/errors.hpp"
#include "caver/io.hpp"
#include "caver/tensor.hpp"
#include "caver/tipp.hpp"
#include "selfcheck.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace caver;

namespace {

// Synthetic input features use a salted stream so they never collide with
// the weight initialization draws for the same --seed.
constexpr std::uint64_t kFeatureSeedSalt = 0x9E3779B97F4A7C15ull;

struct RunConfig {
    TippConfig tipp;
    std::optional<fs::path> features_dir;  // when absent: synthetic from seed
    std::optional<fs::path> weights_dir;   // when absent: initialized from seed
    fs::path out = "caver_out";
    bool patch_explicit = false;  // pins `cost` to a single sweep point
};

struct Flags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::vector<std::size_t> patch;
    std::optional<std::size_t> dim;
    std::optional<std::size_t> heads;
    std::optional<std::string> features_dir;
    std::optional<std::string> weights_dir;
};

bool use_color() {
    return std::getenv("CAVER_NO_COLOR") == nullptr && isatty(fileno(stdout)) != 0;
}

std::string paint(const std::string& text, const char* code) {
    if (!use_color()) return text;
    return std::string("\x1b[") + code + "m" + text + "\x1b[0m";
}

std::string pass_tag(bool ok) {
    return ok ? paint("PASS", "32") : paint("FAIL", "31");
}

void parse_config_file(const fs::path& path, RunConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw ConfigError(detail::msg("cannot open config file: ", path.string()));
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(detail::msg("config is not valid JSON: ", e.what()));
    }
    if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
    try {
        for (const auto& [key, value] : doc.items()) {
            if (key == "seed") {
                cfg.tipp.seed = value.get<std::uint64_t>();
            } else if (key == "dim") {
                cfg.tipp.dim = value.get<std::size_t>();
            } else if (key == "heads") {
                cfg.tipp.n_heads = value.get<std::size_t>();
            } else if (key == "patch") {
                if (!value.is_array() || value.size() != 4)
                    throw ConfigError("\"patch\" must be an array of 4 sizes");
                for (std::size_t i = 0; i < 4; ++i) cfg.tipp.patch[i] = value[i].get<std::size_t>();
                cfg.patch_explicit = true;
            } else if (key == "levels") {
                if (!value.is_array() || value.size() != 4)
                    throw ConfigError("\"levels\" must be an array of 4 {h,w,c} objects");
                for (std::size_t i = 0; i < 4; ++i) {
                    cfg.tipp.levels[i].h = value[i].at("h").get<std::size_t>();
                    cfg.tipp.levels[i].w = value[i].at("w").get<std::size_t>();
                    cfg.tipp.levels[i].c = value[i].at("c").get<std::size_t>();
                }
            } else if (key == "predictor_hidden") {
                cfg.tipp.predictor_hidden = value.get<std::size_t>();
            } else if (key == "bn_eps") {
                cfg.tipp.bn_eps = value.get<double>();
            } else if (key == "features_dir") {
                cfg.features_dir = fs::path(value.get<std::string>());
            } else if (key == "weights_dir") {
                cfg.weights_dir = fs::path(value.get<std::string>());
            } else if (key == "out") {
                cfg.out = fs::path(value.get<std::string>());
            } else {
                throw ConfigError(detail::msg("unknown config key: \"", key, "\""));
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(detail::msg("bad config value: ", e.what()));
    }
}

RunConfig resolve_config(const Flags& flags) {
    RunConfig cfg;
    if (!flags.config_path.empty()) parse_config_file(flags.config_path, cfg);
    if (flags.seed) cfg.tipp.seed = *flags.seed;
    if (flags.dim) cfg.tipp.dim = *flags.dim;
    if (flags.heads) cfg.tipp.n_heads = *flags.heads;
    if (!flags.patch.empty()) {
        if (flags.patch.size() != 4)
            throw ConfigError(detail::msg("--patch needs 4 comma-separated sizes, got ",
                                          flags.patch.size()));
        for (std::size_t i = 0; i < 4; ++i) cfg.tipp.patch[i] = flags.patch[i];
        cfg.patch_explicit = true;
    }
    if (flags.features_dir) cfg.features_dir = fs::path(*flags.features_dir);
    if (flags.weights_dir) cfg.weights_dir = fs::path(*flags.weights_dir);
    if (flags.out) cfg.out = fs::path(*flags.out);
    return cfg;
}

FeaturePyramid load_features_dir(const TippConfig& config, const fs::path& dir) {
    FeaturePyramid features;
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& g = config.levels[i];
        const auto expect = [&](const char* stream, Tensor t) {
            if (t.rank() != 3 || t.extent(0) != g.h || t.extent(1) != g.w || t.extent(2) != g.c)
                throw ShapeError(detail::msg("level ", i + 1, " ", stream, " feature must be ",
                                             g.h, "x", g.w, "x", g.c, ", file holds ",
                                             shape_string(t.shape())));
            return t;
        };
        features[i].rgb =
            expect("rgb", io::read_cavr(dir / detail::msg("level", i + 1, ".rgb.cavr")));
        features[i].dt =
            expect("dt", io::read_cavr(dir / detail::msg("level", i + 1, ".dt.cavr")));
    }
    return features;
}

FeaturePyramid resolve_features(const RunConfig& cfg) {
    if (cfg.features_dir) return load_features_dir(cfg.tipp, *cfg.features_dir);
    return synthetic_features(cfg.tipp, cfg.tipp.seed ^ kFeatureSeedSalt);
}

TippWeights resolve_weights(const RunConfig& cfg) {
    if (cfg.weights_dir) return load_weights(cfg.tipp, *cfg.weights_dir);
    return init_weights(cfg.tipp);
}

void write_failure_report(const fs::path& out, const std::string& what) {
    try {
        fs::create_directories(out);
        io::write_text_file(out / "failure_report.txt", what + "\n");
    } catch (...) {
        // the report is best-effort; the error itself still goes to stderr
    }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_forward(const RunConfig& cfg) {
    cfg.tipp.validate();
    const FeaturePyramid features = resolve_features(cfg);
    const TippWeights weights = resolve_weights(cfg);
    std::vector<std::string> trace;
    const auto t0 = std::chrono::steady_clock::now();
    const SaliencyMap map = tipp_forward(features, cfg.tipp, weights, &trace);
    const double secs = seconds_since(t0);
    fs::create_directories(cfg.out);
    io::write_cavr(cfg.out / "saliency.cavr", map.values);
    io::write_pgm(cfg.out / "saliency.pgm", map.values);
    std::ostringstream log;
    for (const auto& line : trace) log << line << "\n";
    io::write_text_file(cfg.out / "shape_trace.txt", log.str());
    std::cout << "forward: " << map.values.extent(0) << "x" << map.values.extent(1)
              << " saliency map in " << secs << " s\n"
              << "wrote " << (cfg.out / "saliency.cavr").string() << "\n"
              << "wrote " << (cfg.out / "saliency.pgm").string() << "\n"
              << "wrote " << (cfg.out / "shape_trace.txt").string() << " (" << trace.size()
              << " blocks)\n";
    return 0;
}

std::string patch_string(const std::array<std::size_t, 4>& p) {
    return detail::msg("(", p[0], ",", p[1], ",", p[2], ",", p[3], ")");
}

int cmd_cost(const RunConfig& cfg) {
    cfg.tipp.validate();
    std::vector<std::array<std::size_t, 4>> sweep;
    if (cfg.patch_explicit)
        sweep.push_back(cfg.tipp.patch);
    else
        sweep = {{2, 2, 2, 2}, {4, 4, 4, 4}, {8, 8, 8, 8}};

    const FeaturePyramid features = resolve_features(cfg);
    json rows = json::array();
    std::ostringstream table, reports;
    const std::string head = detail::msg("patch          total_flops     attn_flops      ",
                                         "attn_mem        crossover@L1");
    table << head << "\n" << std::string(head.size(), '-') << "\n";
    for (const auto& patch : sweep) {
        RunConfig point = cfg;
        point.tipp.patch = patch;
        point.tipp.validate();
        const TippWeights weights = resolve_weights(point);
        const cost::CostReport report = cost::instrument_forward(features, point.tipp, weights);
        const auto& l1 = point.tipp.levels[0];
        const auto cross = cost::crossover(point.tipp.dim, point.tipp.n_heads, patch[0]);
        char line[160];
        std::snprintf(line, sizeof line, "%-14s %-15llu %-15llu %-15llu %s",
                      patch_string(patch).c_str(),
                      static_cast<unsigned long long>(report.total_flops),
                      static_cast<unsigned long long>(report.flops_measured),
                      static_cast<unsigned long long>(report.mem_measured),
                      cross ? std::to_string(*cross).c_str() : "none");
        table << line << "\n";
        json row;
        row["patch"] = patch;
        row["level1_tokens"] = l1.h * l1.w;
        row["crossover_level1"] = cross ? json(*cross) : json(nullptr);
        row["report"] = json::parse(report.to_json());
        rows.push_back(std::move(row));

        reports << "\npatch " << patch_string(patch) << "\n" << report.to_text();
    }
    std::ostringstream text;
    text << table.str() << reports.str();
    json doc;
    doc["schema"] = "caver-cost/1";
    doc["dim"] = cfg.tipp.dim;
    doc["heads"] = cfg.tipp.n_heads;
    doc["rows"] = std::move(rows);
    fs::create_directories(cfg.out);
    io::write_text_file(cfg.out / "cost.txt", text.str());
    io::write_text_file(cfg.out / "cost.json", doc.dump(2) + "\n");
    std::cout << text.str();
    std::cout << "wrote " << (cfg.out / "cost.txt").string() << "\n"
              << "wrote " << (cfg.out / "cost.json").string() << "\n";
    return 0;
}

int cmd_check(const RunConfig& cfg, const std::string& inject_fault) {
    if (!inject_fault.empty()) {
        if (inject_fault != "spatial-scale")
            throw ConfigError(detail::msg("unknown fault: \"", inject_fault,
                                          "\" (supported: spatial-scale)"));
        testing::set_spatial_scale_fault(true);
        std::cout << "fault injected: spatial attention scale factor flipped\n";
    }
    fs::create_directories(cfg.out);
    const auto results = selfcheck::run_all(cfg.tipp.seed, cfg.out);
    bool all = true;
    json checks = json::array();
    for (const auto& r : results) {
        all = all && r.passed;
        std::cout << "[" << pass_tag(r.passed) << "] " << r.name << ": " << r.detail << "\n";
        checks.push_back({{"name", r.name}, {"passed", r.passed}, {"detail", r.detail}});
    }
    json doc;
    doc["schema"] = "caver-check/1";
    doc["all_passed"] = all;
    doc["fault"] = inject_fault.empty() ? json(nullptr) : json(inject_fault);
    doc["checks"] = std::move(checks);
    io::write_text_file(cfg.out / "check_summary.json", doc.dump(2) + "\n");
    std::cout << (all ? "all checks passed" : "CHECK FAILURES PRESENT") << "\n"
              << "wrote " << (cfg.out / "check_summary.json").string() << "\n";
    return all ? 0 : 1;
}

int cmd_dump_attn(const RunConfig& cfg, std::size_t level, const std::string& block,
                  std::optional<std::size_t> query) {
    cfg.tipp.validate();
    if (level < 1 || level > 4)
        throw ConfigError(detail::msg("--level must be 1..4, got ", level));
    static const std::vector<std::pair<std::string, std::string>> kBlocks = {
        {"imsa_rgb", "imsa_rgb"},
        {"imsa_dt", "imsa_dt"},
        {"imca_rgb_query", "imca.rgb_query"},
        {"imca_dt_query", "imca.dt_query"},
        {"cssa", "cssa"},
    };
    std::string site;
    for (const auto& [name, suffix] : kBlocks)
        if (name == block) site = detail::msg("cmiu", level, ".", suffix);
    if (site.empty()) {
        std::ostringstream names;
        for (const auto& [name, _] : kBlocks) names << " " << name;
        throw ConfigError(detail::msg("unknown block name: \"", block, "\" (expected one of:",
                                      names.str(), ")"));
    }

    const FeaturePyramid features = resolve_features(cfg);
    const TippWeights weights = resolve_weights(cfg);
    AttentionProbe probe(site);
    tipp_forward(features, cfg.tipp, weights);
    if (!probe.hit())
        throw Error(detail::msg("attention site ", site, " was never reached"));
    const AttentionMaps& maps = probe.maps();

    fs::create_directories(cfg.out);
    std::size_t written = 0;
    const auto dump = [&](const std::string& stem, const Tensor& t) {
        io::write_cavr(cfg.out / (stem + ".cavr"), t);
        io::write_pgm(cfg.out / (stem + ".pgm"), t);
        written += 2;
    };
    for (std::size_t h = 0; h < maps.spatial.size(); ++h)
        dump(detail::msg("spatial_head", h), maps.spatial[h]);
    for (std::size_t h = 0; h < maps.channel.size(); ++h)
        dump(detail::msg("channel_head", h), maps.channel[h]);

    if (query) {
        const Tensor& m = maps.spatial.at(0);
        if (*query >= m.extent(0))
            throw ConfigError(detail::msg("--query ", *query, " out of range; site has ",
                                          m.extent(0), " patch tokens"));
        const std::size_t p = cfg.tipp.patch[level - 1];
        const auto& g = cfg.tipp.levels[level - 1];
        Tensor row({m.extent(1)});
        for (std::size_t j = 0; j < m.extent(1); ++j) row(j) = m(*query, j);
        io::write_cavr(cfg.out / detail::msg("query", *query, "_row.cavr"), row);
        io::write_pgm(cfg.out / detail::msg("query", *query, "_row.pgm"),
                      row.reshaped({g.h / p, g.w / p}));
        written += 2;
    }
    std::cout << "site " << site << ": " << maps.spatial.size() << " spatial map(s) "
              << maps.spatial.at(0).extent(0) << "x" << maps.spatial.at(0).extent(1) << ", "
              << maps.channel.size() << " channel map(s) " << maps.channel.at(0).extent(0) << "x"
              << maps.channel.at(0).extent(1) << "\n"
              << "wrote " << written << " files under " << cfg.out.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CAVER view-mixed transformer decoder: forward passes, cost tables, "
                 "verification, attention dumps"};
    app.require_subcommand(1);
    Flags flags;

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", flags.config_path, "JSON config file");
        sub->add_option("--seed", flags.seed, "base seed for weights and synthetic inputs");
        sub->add_option("--out", flags.out, "output directory (default caver_out)");
        sub->add_option("--dim", flags.dim, "embedding width D");
        sub->add_option("--heads", flags.heads, "attention head count");
        sub->add_option("--patch", flags.patch, "patch sides p1,p2,p3,p4")->delimiter(',');
        sub->add_option("--features", flags.features_dir,
                        "directory of level{i}.{rgb,dt}.cavr feature files");
        sub->add_option("--weights", flags.weights_dir, "directory of saved weight tensors");
    };

    CLI::App* forward = app.add_subcommand("forward", "run the decoder, write saliency map");
    add_common(forward);

    CLI::App* cost = app.add_subcommand("cost", "closed-form vs instrumented cost table");
    add_common(cost);

    CLI::App* check = app.add_subcommand("check", "run the property verification suite");
    add_common(check);
    std::string inject_fault;
    check->add_option("--inject-fault", inject_fault,
                      "test hook; \"spatial-scale\" flips the spatial attention scale");

    CLI::App* dump = app.add_subcommand("dump-attn", "dump attention similarity maps");
    add_common(dump);
    std::size_t level = 1;
    std::string block = "imsa_rgb";
    std::optional<std::size_t> query;
    dump->add_option("--level", level, "CMIU level 1..4")->required();
    dump->add_option("--block", block,
                     "imsa_rgb | imsa_dt | imca_rgb_query | imca_dt_query | cssa")
        ->required();
    dump->add_option("--query", query, "also dump this patch token's attention row");

    CLI11_PARSE(app, argc, argv);

    fs::path out_hint = flags.out ? fs::path(*flags.out) : fs::path("caver_out");
    try {
        const RunConfig cfg = resolve_config(flags);
        out_hint = cfg.out;
        if (forward->parsed()) return cmd_forward(cfg);
        if (cost->parsed()) return cmd_cost(cfg);
        if (check->parsed()) return cmd_check(cfg, inject_fault);
        if (dump->parsed()) return cmd_dump_attn(cfg, level, block, query);
        return 2;  // unreachable; require_subcommand guards this
    } catch (const std::exception& e) {
        std::cerr << paint("error: ", "31") << e.what() << "\n";
        write_failure_report(out_hint, e.what());
        return 1;
    }
}
