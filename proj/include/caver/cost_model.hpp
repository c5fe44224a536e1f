#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "caver/tipp.hpp"
#include "caver/trace.hpp"

// Closed-form and instrumented cost accounting for the attention blocks
// and the full decoder.  All closed forms are evaluated in exact integer
// or rational arithmetic; "flops" counts fused multiply-adds, the unit in
// which the closed forms 2N^2D and 2N^2D/p^2 + 2ND^2 are expressed.

namespace caver::cost {

// Nonnegative rational kept normalized; the patch-size divisions in the
// closed forms may leave non-integer values for off-grid shapes.
class Rational {
  public:
    Rational() = default;
    Rational(std::uint64_t n) : num_(n) {}
    Rational(std::uint64_t num, std::uint64_t den);

    std::uint64_t num() const { return num_; }
    std::uint64_t den() const { return den_; }
    bool integral() const { return den_ == 1; }
    // Throws NumericError unless integral.
    std::uint64_t integer() const;
    double approx() const { return static_cast<double>(num_) / static_cast<double>(den_); }
    std::string str() const;

    friend Rational operator+(const Rational& a, const Rational& b);
    friend bool operator<(const Rational& a, const Rational& b);
    friend bool operator==(const Rational& a, const Rational& b);

  private:
    std::uint64_t num_ = 0;
    std::uint64_t den_ = 1;
};

struct AttentionCost {
    Rational flops;  // headline form: spatial + head-agnostic channel for the mixed variant
    Rational mem;    // similarity-matrix elements plus branch token buffers
    Rational flops_spatial;
    Rational flops_channel_head_agnostic;  // 2ND^2, the head-count-free reading
    Rational flops_channel_per_head;       // 2ND^2/N_h, what the per-head construction costs

    // The sum an instrumented run of the attention matrix products yields.
    Rational flops_instrumentable() const { return flops_spatial + flops_channel_per_head; }
};

// Plain attention over N pixel tokens: flops 2N^2D, memory N_h*N^2 + N*D.
AttentionCost standard_attention_cost(std::uint64_t n, std::uint64_t d, std::uint64_t n_h);

// View-mixed attention with patch side p:
// flops 2N^2D/p^2 + 2ND^2, memory N_h*N^2/p^4 + D^2/N_h + 2ND.
AttentionCost vma_attention_cost(std::uint64_t n, std::uint64_t d, std::uint64_t n_h,
                                 std::uint64_t p);

// Smallest token count N where the view-mixed flop cost drops below the
// standard 2N^2D, by exact integer scan; empty when no such N exists
// (p = 1, where the mixed form only adds the channel term).
std::optional<std::uint64_t> crossover(std::uint64_t d, std::uint64_t n_h, std::uint64_t p);

// Attention-core tallies extracted from a tracker: the two matrix
// products of each branch, the softmax matrix elements, and the branch
// concat buffers.  site_prefix narrows to one attention instance
// (e.g. "cmiu1.imsa_rgb.attn"); empty means the whole tracker.
struct MeasuredAttentionCore {
    std::uint64_t spatial_macs = 0;
    std::uint64_t channel_macs = 0;
    std::uint64_t attn_matrix_elems = 0;
    std::uint64_t token_elems = 0;
};
MeasuredAttentionCore measure_attention_core(const CostTracker& tracker,
                                             const std::string& site_prefix = {});

struct BreakdownEntry {
    std::string label;
    std::uint64_t flops = 0;
    std::uint64_t mem = 0;
};

struct SiteCost {
    std::string site;  // attention instance, e.g. "cmiu2.imca.rgb_query"
    std::uint64_t n = 0, p = 0;
    std::uint64_t flops_closed = 0, flops_measured = 0;
    std::uint64_t mem_closed = 0, mem_measured = 0;
    std::uint64_t flops_channel_head_agnostic = 0;
};

struct CostReport {
    // Aggregates over every attention instance of the decoder; closed
    // forms use the per-head channel term, which instrumented runs must
    // reproduce exactly.
    std::uint64_t flops_closed = 0;
    std::uint64_t flops_measured = 0;
    std::uint64_t mem_closed = 0;
    std::uint64_t mem_measured = 0;
    std::uint64_t flops_channel_head_agnostic = 0;  // head-count-free channel reading
    std::uint64_t total_flops = 0;                  // every multiply-add of the forward
    std::vector<SiteCost> sites;
    std::vector<BreakdownEntry> breakdown;

    std::string to_text() const;
    std::string to_json() const;
};

// Runs the forward pass under a cost tracker and checks, per attention
// instance, that the instrumented core counts equal the closed forms
// exactly.  Optional sinks receive the saliency map and shape trace of
// the same run.
CostReport instrument_forward(const FeaturePyramid& features, const TippConfig& config,
                              const TippWeights& weights, SaliencyMap* saliency = nullptr,
                              std::vector<std::string>* shape_trace = nullptr);

}  // namespace caver::cost
