#include "caver/trace.hpp"

namespace caver {

namespace {
thread_local CostTracker* g_current = nullptr;
}

CostTracker* trace_current() { return g_current; }

CostTracker::Bind::Bind(CostTracker& t) : prev_(g_current) { g_current = &t; }
CostTracker::Bind::~Bind() { g_current = prev_; }

CostTracker::Section::Section(const std::string& label) : tracker_(g_current) {
    if (tracker_) tracker_->push_label(label);
}

CostTracker::Section::~Section() {
    if (tracker_) tracker_->pop_label();
}

void CostTracker::push_label(const std::string& label) { labels_.push_back(label); }

void CostTracker::pop_label() { labels_.pop_back(); }

std::string CostTracker::current_path() const {
    std::string path;
    for (const auto& l : labels_) {
        if (!path.empty()) path += '.';
        path += l;
    }
    return path;
}

void CostTracker::add(const OpCounts& c) {
    total_ += c;
    sections_[current_path()] += c;
}

std::uint64_t CostTracker::macs_matching(const std::string& needle) const {
    std::uint64_t sum = 0;
    for (const auto& [path, counts] : sections_) {
        if (path.find(needle) != std::string::npos) sum += counts.macs;
    }
    return sum;
}

}  // namespace caver
