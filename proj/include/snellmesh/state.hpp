#pragma once

#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace snell {

enum class SpaceKind { finite, continuous };

/// Descriptor of one time slice E_k: a finite set {0, ..., size-1} or R^size.
struct StateSpace {
  SpaceKind kind = SpaceKind::finite;
  std::size_t size = 0;

  static StateSpace finite(std::size_t cardinality) { return {SpaceKind::finite, cardinality}; }
  static StateSpace continuous(std::size_t dimension = 1) { return {SpaceKind::continuous, dimension}; }

  bool is_finite() const { return kind == SpaceKind::finite; }
  bool operator==(const StateSpace&) const = default;
};

/// A point of some E_k: either a category index or a real vector.
class State {
 public:
  State() = default;

  static State category(std::size_t index) { return State(Value(std::in_place_index<0>, index)); }
  static State point(double x) { return State(Value(std::in_place_index<1>, std::vector<double>{x})); }
  static State point(std::vector<double> xs) { return State(Value(std::in_place_index<1>, std::move(xs))); }

  bool is_finite() const { return value_.index() == 0; }
  std::size_t index() const { return std::get<0>(value_); }
  std::span<const double> coords() const { return std::get<1>(value_); }
  double scalar() const { return std::get<1>(value_).front(); }

  bool belongs_to(const StateSpace& space) const {
    if (space.is_finite()) return is_finite() && index() < space.size;
    return !is_finite() && coords().size() == space.size;
  }

  std::string to_string() const {
    if (is_finite()) return std::to_string(index());
    std::ostringstream os;
    os.precision(17);
    const auto xs = coords();
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i) os << ' ';
      os << xs[i];
    }
    return os.str();
  }

  friend bool operator==(const State& a, const State& b) { return a.value_ == b.value_; }
  friend bool operator<(const State& a, const State& b) { return a.value_ < b.value_; }

 private:
  using Value = std::variant<std::size_t, std::vector<double>>;
  explicit State(Value v) : value_(std::move(v)) {}

  Value value_{std::in_place_index<0>, std::size_t{0}};
};

}  // namespace snell
