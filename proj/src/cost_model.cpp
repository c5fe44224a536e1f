#include "caver/cost_model.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "caver/errors.hpp"

namespace caver::cost {

Rational::Rational(std::uint64_t num, std::uint64_t den) : num_(num), den_(den) {
    if (den_ == 0) throw NumericError("rational with zero denominator");
    const std::uint64_t g = std::gcd(num_, den_);
    num_ /= g;
    den_ /= g;
}

std::uint64_t Rational::integer() const {
    if (!integral())
        throw NumericError(detail::msg("cost ", str(), " is not an integer"));
    return num_;
}

std::string Rational::str() const {
    return integral() ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
}

Rational operator+(const Rational& a, const Rational& b) {
    return Rational(a.num_ * b.den_ + b.num_ * a.den_, a.den_ * b.den_);
}

bool operator<(const Rational& a, const Rational& b) {
    return a.num_ * b.den_ < b.num_ * a.den_;
}

bool operator==(const Rational& a, const Rational& b) {
    return a.num_ == b.num_ && a.den_ == b.den_;
}

namespace {

void require_attention_shape(std::uint64_t n, std::uint64_t d, std::uint64_t n_h) {
    if (n == 0 || d == 0 || n_h == 0 || d % n_h != 0)
        throw ShapeError(detail::msg("attention cost: need positive N, D and head count ", n_h,
                                     " dividing D=", d));
}

}  // namespace

AttentionCost standard_attention_cost(std::uint64_t n, std::uint64_t d, std::uint64_t n_h) {
    require_attention_shape(n, d, n_h);
    AttentionCost c;
    c.flops_spatial = Rational(2 * n * n * d);
    c.flops = c.flops_spatial;
    c.mem = Rational(n_h * n * n + n * d);
    return c;
}

AttentionCost vma_attention_cost(std::uint64_t n, std::uint64_t d, std::uint64_t n_h,
                                 std::uint64_t p) {
    require_attention_shape(n, d, n_h);
    if (p == 0) throw ShapeError("attention cost: patch side must be at least 1");
    AttentionCost c;
    c.flops_spatial = Rational(2 * n * n * d, p * p);
    c.flops_channel_head_agnostic = Rational(2 * n * d * d);
    c.flops_channel_per_head = Rational(2 * n * d * d, n_h);
    c.flops = c.flops_spatial + c.flops_channel_head_agnostic;
    c.mem = Rational(n_h * n * n, p * p * p * p) + Rational(d * d, n_h) + Rational(2 * n * d);
    return c;
}

std::optional<std::uint64_t> crossover(std::uint64_t d, std::uint64_t n_h, std::uint64_t p) {
    require_attention_shape(1, d, n_h);
    if (p == 0) throw ShapeError("crossover: patch side must be at least 1");
    // The mixed cost falls below 2N^2D once N(1 - 1/p^2) clears D, so any
    // crossover lies well under this bound; hitting it means none exists.
    const std::uint64_t bound = 4 * d + 4;
    for (std::uint64_t n = 1; n <= bound; ++n) {
        if (vma_attention_cost(n, d, n_h, p).flops < standard_attention_cost(n, d, n_h).flops)
            return n;
    }
    return std::nullopt;
}

MeasuredAttentionCore measure_attention_core(const CostTracker& tracker,
                                             const std::string& site_prefix) {
    const auto ends_with = [](const std::string& s, const std::string& tail) {
        return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
    };
    MeasuredAttentionCore m;
    for (const auto& [path, counts] : tracker.sections()) {
        if (!site_prefix.empty() && path.rfind(site_prefix, 0) != 0) continue;
        if (ends_with(path, "spatial.qk") || ends_with(path, "spatial.av"))
            m.spatial_macs += counts.macs;
        else if (ends_with(path, "channel.qk") || ends_with(path, "channel.av"))
            m.channel_macs += counts.macs;
        m.attn_matrix_elems += counts.attn_matrix_elems;
        m.token_elems += counts.token_elems;
    }
    return m;
}

CostReport instrument_forward(const FeaturePyramid& features, const TippConfig& config,
                              const TippWeights& weights, SaliencyMap* saliency,
                              std::vector<std::string>* shape_trace) {
    CostTracker tracker;
    {
        CostTracker::Bind bind(tracker);
        SaliencyMap map = tipp_forward(features, config, weights, shape_trace);
        if (saliency) *saliency = std::move(map);
    }

    CostReport report;
    report.total_flops = tracker.total().macs;

    for (std::size_t i = 0; i < 4; ++i) {
        const std::string cm = "cmiu" + std::to_string(i + 1);
        const std::uint64_t n = config.levels[i].h * config.levels[i].w;
        const std::uint64_t p = config.patch[i];
        const AttentionCost closed = vma_attention_cost(n, config.dim, config.n_heads, p);
        const struct {
            const char* site;
            const char* section;
        } instances[] = {
            {"imsa_rgb", "imsa_rgb.attn"},
            {"imsa_dt", "imsa_dt.attn"},
            {"imca.rgb_query", "imca.attn_rgb_query"},
            {"imca.dt_query", "imca.attn_dt_query"},
            {"cssa", "cssa.attn"},
        };
        for (const auto& inst : instances) {
            const MeasuredAttentionCore m =
                measure_attention_core(tracker, cm + "." + inst.section);
            SiteCost site;
            site.site = cm + "." + inst.site;
            site.n = n;
            site.p = p;
            site.flops_closed = closed.flops_instrumentable().integer();
            site.flops_measured = m.spatial_macs + m.channel_macs;
            site.mem_closed = closed.mem.integer();
            site.mem_measured = m.attn_matrix_elems + m.token_elems;
            site.flops_channel_head_agnostic = closed.flops_channel_head_agnostic.integer();
            if (site.flops_measured != site.flops_closed)
                throw Error(detail::msg("instrumented attention flops at ", site.site, " are ",
                                        site.flops_measured, ", closed form gives ",
                                        site.flops_closed));
            if (site.mem_measured != site.mem_closed)
                throw Error(detail::msg("instrumented attention memory at ", site.site, " is ",
                                        site.mem_measured, ", closed form gives ",
                                        site.mem_closed));
            report.flops_closed += site.flops_closed;
            report.flops_measured += site.flops_measured;
            report.mem_closed += site.mem_closed;
            report.mem_measured += site.mem_measured;
            report.flops_channel_head_agnostic += site.flops_channel_head_agnostic;
            report.sites.push_back(std::move(site));
        }
    }

    // Per-block aggregation of every tallied section.
    std::vector<BreakdownEntry> blocks;
    for (const auto& [path, counts] : tracker.sections()) {
        std::string label = path;
        if (path.rfind("cmiu", 0) == 0) {
            const std::size_t first = path.find('.');
            const std::size_t second = first == std::string::npos
                                           ? std::string::npos
                                           : path.find('.', first + 1);
            if (second != std::string::npos) label = path.substr(0, second);
        } else {
            const std::size_t first = path.find('.');
            if (first != std::string::npos) label = path.substr(0, first);
        }
        if (!blocks.empty() && blocks.back().label == label) {
            blocks.back().flops += counts.macs;
            blocks.back().mem += counts.attn_matrix_elems + counts.token_elems;
        } else {
            auto it = std::find_if(blocks.begin(), blocks.end(),
                                   [&](const BreakdownEntry& b) { return b.label == label; });
            if (it == blocks.end()) {
                blocks.push_back({label, counts.macs,
                                  counts.attn_matrix_elems + counts.token_elems});
            } else {
                it->flops += counts.macs;
                it->mem += counts.attn_matrix_elems + counts.token_elems;
            }
        }
    }
    report.breakdown = std::move(blocks);
    return report;
}

std::string CostReport::to_text() const {
    std::ostringstream out;
    out << "attention cores (closed vs instrumented)\n";
    out << "  flops  closed " << flops_closed << "  measured " << flops_measured << "\n";
    out << "  mem    closed " << mem_closed << "  measured " << mem_measured << "\n";
    out << "  channel term, head-agnostic reading: " << flops_channel_head_agnostic << "\n";
    out << "total forward multiply-adds: " << total_flops << "\n\n";
    out << std::left << std::setw(26) << "site" << std::right << std::setw(8) << "N"
        << std::setw(4) << "p" << std::setw(14) << "flops" << std::setw(12) << "mem" << "\n";
    for (const SiteCost& s : sites)
        out << std::left << std::setw(26) << s.site << std::right << std::setw(8) << s.n
            << std::setw(4) << s.p << std::setw(14) << s.flops_measured << std::setw(12)
            << s.mem_measured << "\n";
    out << "\n" << std::left << std::setw(26) << "block" << std::right << std::setw(14) << "flops"
        << std::setw(12) << "mem" << "\n";
    for (const BreakdownEntry& b : breakdown)
        out << std::left << std::setw(26) << b.label << std::right << std::setw(14) << b.flops
            << std::setw(12) << b.mem << "\n";
    return std::move(out).str();
}

std::string CostReport::to_json() const {
    nlohmann::json j;
    j["flops_closed"] = flops_closed;
    j["flops_measured"] = flops_measured;
    j["mem_closed"] = mem_closed;
    j["mem_measured"] = mem_measured;
    j["flops_channel_head_agnostic"] = flops_channel_head_agnostic;
    j["total_flops"] = total_flops;
    j["sites"] = nlohmann::json::array();
    for (const SiteCost& s : sites) {
        j["sites"].push_back({{"site", s.site},
                              {"n", s.n},
                              {"p", s.p},
                              {"flops_closed", s.flops_closed},
                              {"flops_measured", s.flops_measured},
                              {"mem_closed", s.mem_closed},
                              {"mem_measured", s.mem_measured},
                              {"flops_channel_head_agnostic", s.flops_channel_head_agnostic}});
    }
    j["breakdown"] = nlohmann::json::array();
    for (const BreakdownEntry& b : breakdown)
        j["breakdown"].push_back({{"label", b.label}, {"flops", b.flops}, {"mem", b.mem}});
    return j.dump(2);
}

}  // namespace caver::cost
