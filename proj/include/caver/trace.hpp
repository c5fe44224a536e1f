#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace caver {

// Tallies gathered while a tracker is bound. "macs" counts fused
// multiply-adds; the two element counts feed the attention memory figure
// (similarity matrices kept by softmax, token buffers concatenated across
// branches).
struct OpCounts {
    std::uint64_t macs = 0;
    std::uint64_t attn_matrix_elems = 0;
    std::uint64_t token_elems = 0;

    OpCounts& operator+=(const OpCounts& o) {
        macs += o.macs;
        attn_matrix_elems += o.attn_matrix_elems;
        token_elems += o.token_elems;
        return *this;
    }
};

// Collects per-operation cost tallies under dotted section labels, e.g.
// "cmiu1.imsa_rgb.attn.head0.spatial.qk".  Counting is opt-in: ops report
// only when a tracker is bound to the calling thread, so plain forward
// passes pay nothing but a thread-local pointer check.
class CostTracker {
  public:
    // Binds a tracker to the current thread for its lifetime.
    class Bind {
      public:
        explicit Bind(CostTracker& t);
        ~Bind();
        Bind(const Bind&) = delete;
        Bind& operator=(const Bind&) = delete;

      private:
        CostTracker* prev_;
    };

    // Appends one label to the bound tracker's section path.  Constructed
    // with no tracker bound it does nothing, so instrumented code needs no
    // conditionals.
    class Section {
      public:
        explicit Section(const std::string& label);
        ~Section();
        Section(const Section&) = delete;
        Section& operator=(const Section&) = delete;

      private:
        CostTracker* tracker_;
    };

    const OpCounts& total() const { return total_; }
    const std::map<std::string, OpCounts>& sections() const { return sections_; }

    // Sum of macs over sections whose path contains `needle`.
    std::uint64_t macs_matching(const std::string& needle) const;

    std::string current_path() const;

    void add(const OpCounts& c);

  private:
    void push_label(const std::string& label);
    void pop_label();

    OpCounts total_;
    std::map<std::string, OpCounts> sections_;
    std::vector<std::string> labels_;

    friend CostTracker* trace_current();
};

// Tracker bound to this thread, or nullptr.
CostTracker* trace_current();

namespace trace {

inline bool active() { return trace_current() != nullptr; }

inline void add_macs(std::uint64_t n) {
    if (CostTracker* t = trace_current()) t->add({n, 0, 0});
}

inline void add_attn_matrix_elems(std::uint64_t n) {
    if (CostTracker* t = trace_current()) t->add({0, n, 0});
}

inline void add_token_elems(std::uint64_t n) {
    if (CostTracker* t = trace_current()) t->add({0, 0, n});
}

}  // namespace trace

}  // namespace caver
