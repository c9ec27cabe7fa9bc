#pragma once

#include "ratioflow/common.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace ratioflow {

struct ParamEntry {
    std::string name;
    std::vector<std::int64_t> shape;
    Vec values;  // flat, column-major for matrices

    std::int64_t count() const {
        std::int64_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }
};

/// Ordered, named float64 arrays. Order is part of the identity: gradients,
/// optimizer moments, and checkpoint payloads all follow entry order.
class ParameterStore {
public:
    void add(std::string name, std::vector<std::int64_t> shape, Vec values) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
        std::int64_t n = 1;
        for (auto d : shape) {
            if (d <= 0) throw ConfigError("parameter '" + name + "' has non-positive dim");
            n *= d;
        }
        if (values.size() != n)
            throw ConfigError("parameter '" + name + "' value count does not match shape");
        index_[name] = entries_.size();
        entries_.push_back(ParamEntry{std::move(name), std::move(shape), std::move(values)});
    }

    void add_zeros(std::string name, std::vector<std::int64_t> shape) {
        std::int64_t n = 1;
        for (auto d : shape) n *= d;
        add(std::move(name), std::move(shape), Vec::Zero(n));
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    ParamEntry& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("no parameter named '" + name + "'");
        return entries_[it->second];
    }

    const ParamEntry& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("no parameter named '" + name + "'");
        return entries_[it->second];
    }

    std::size_t size() const { return entries_.size(); }
    ParamEntry& operator[](std::size_t i) { return entries_[i]; }
    const ParamEntry& operator[](std::size_t i) const { return entries_[i]; }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    std::int64_t total_size() const {
        std::int64_t n = 0;
        for (const auto& e : entries_) n += e.values.size();
        return n;
    }

    bool congruent_with(const ParameterStore& other) const {
        if (entries_.size() != other.entries_.size()) return false;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].name != other.entries_[i].name) return false;
            if (entries_[i].shape != other.entries_[i].shape) return false;
        }
        return true;
    }

    ParameterStore zeros_like() const {
        ParameterStore z;
        for (const auto& e : entries_) z.add(e.name, e.shape, Vec::Zero(e.values.size()));
        return z;
    }

    void set_zero() {
        for (auto& e : entries_) e.values.setZero();
    }

private:
    std::vector<ParamEntry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace ratioflow
