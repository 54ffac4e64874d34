#pragma once
// Named trainable arrays. Registration order is fixed so initialization,
// checkpoints and optimizer walks are deterministic.

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace knews {

template <typename T>
class ParamRegistry {
  public:
    struct Entry {
        Tensor<T> value;
        bool frozen = false;
    };

    void add(const std::string& name, Tensor<T> value, bool frozen = false) {
        if (map_.count(name)) throw std::invalid_argument("param already registered: " + name);
        map_.emplace(name, Entry{std::move(value), frozen});
        order_.push_back(name);
    }

    bool has(const std::string& name) const { return map_.count(name) != 0; }

    Entry& entry(const std::string& name) {
        auto it = map_.find(name);
        if (it == map_.end()) throw std::out_of_range("unknown param: " + name);
        return it->second;
    }
    const Entry& entry(const std::string& name) const {
        auto it = map_.find(name);
        if (it == map_.end()) throw std::out_of_range("unknown param: " + name);
        return it->second;
    }

    Tensor<T>& value(const std::string& name) { return entry(name).value; }
    const Tensor<T>& value(const std::string& name) const { return entry(name).value; }
    bool frozen(const std::string& name) const { return entry(name).frozen; }

    const std::vector<std::string>& names() const { return order_; }

    size_t trainable_count() const {
        size_t n = 0;
        for (const auto& name : order_)
            if (!frozen(name)) ++n;
        return n;
    }

    template <typename U>
    ParamRegistry<U> cast() const {
        ParamRegistry<U> out;
        for (const auto& name : order_) {
            const Entry& e = entry(name);
            out.add(name, e.value.template cast<U>(), e.frozen);
        }
        return out;
    }

  private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, Entry> map_;
};

// Zero-initialized gradient buffers matching a registry. Training stores skip
// frozen entries; the gradient checker includes them.
template <typename T>
class GradStore {
  public:
    GradStore() = default;
    GradStore(const ParamRegistry<T>& reg, bool include_frozen) {
        for (const auto& name : reg.names()) {
            if (!include_frozen && reg.frozen(name)) continue;
            const Tensor<T>& v = reg.value(name);
            map_.emplace(name, Tensor<T>(v.rows, v.cols));
            order_.push_back(name);
        }
    }

    bool has(const std::string& name) const { return map_.count(name) != 0; }

    Tensor<T>* sink(const std::string& name) {
        auto it = map_.find(name);
        return it == map_.end() ? nullptr : &it->second;
    }
    const Tensor<T>& grad(const std::string& name) const { return map_.at(name); }

    const std::vector<std::string>& names() const { return order_; }

    void zero() {
        for (auto& name : order_) map_.at(name).zero();
    }

    void add(const GradStore& other) {
        for (const auto& name : order_) map_.at(name).add_inplace(other.map_.at(name));
    }

  private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, Tensor<T>> map_;
};

// Glorot-uniform fill; vectors are treated as [n x 1].
template <typename T>
void glorot_fill(Tensor<T>& t, Rng& rng) {
    const double fan_in = t.cols;
    const double fan_out = t.rows;
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (T& v : t.data) v = static_cast<T>(rng.uniform(-limit, limit));
}

}  // namespace knews
