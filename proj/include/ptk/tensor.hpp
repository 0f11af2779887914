#pragma once

// Component arrays at a point with per-slot index kinds. A tensor of jet
// order q > 0 stores, per component, the Taylor coefficients of that
// component field up to degree q, so the same class carries pointwise
// values (q = 0) and fields expanded at the base point.

#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ptk/jet.hpp"

namespace ptk {

enum class SlotKind { tangent, cotangent, tractor, cotractor };

inline bool is_tractor_kind(SlotKind k) { return k == SlotKind::tractor || k == SlotKind::cotractor; }
inline bool is_upper(SlotKind k) { return k == SlotKind::tangent || k == SlotKind::tractor; }
SlotKind dual_kind(SlotKind k);
const char* kind_name(SlotKind k);

class ChartTensor {
public:
    ChartTensor() = default;
    ChartTensor(int n, std::vector<SlotKind> slots, double weight = 0.0, int order = 0,
                std::string scale_tag = {});

    int n() const noexcept { return n_; }
    int rank() const noexcept { return static_cast<int>(slots_.size()); }
    const std::vector<SlotKind>& slots() const noexcept { return slots_; }
    SlotKind kind(int i) const { return slots_.at(i); }
    int extent(int i) const { return extents_.at(i); }
    const std::vector<int>& extents() const noexcept { return extents_; }

    double weight() const noexcept { return weight_; }
    void set_weight(double w) noexcept { weight_ = w; }
    const std::string& scale_tag() const noexcept { return scale_; }
    void set_scale_tag(std::string s) { scale_ = std::move(s); }

    int order() const noexcept { return order_; }
    std::size_t ncoef() const noexcept { return ncoef_; }
    std::size_t ncomp() const noexcept { return ncomp_; }

    std::size_t flat(std::span<const int> idx) const;
    std::size_t flat(std::initializer_list<int> idx) const {
        return flat(std::span<const int>(idx.begin(), idx.size()));
    }
    std::vector<int> unflat(std::size_t f) const;

    /// Value (degree-0 coefficient) of a component.
    double& operator()(std::initializer_list<int> idx) { return data_[flat(idx) * ncoef_]; }
    double operator()(std::initializer_list<int> idx) const { return data_[flat(idx) * ncoef_]; }
    double value(std::size_t f) const { return data_[f * ncoef_]; }
    double& value(std::size_t f) { return data_[f * ncoef_]; }

    std::span<double> coeffs(std::size_t f) { return {data_.data() + f * ncoef_, ncoef_}; }
    std::span<const double> coeffs(std::size_t f) const { return {data_.data() + f * ncoef_, ncoef_}; }
    Jet jet(std::size_t f) const;
    void set_jet(std::size_t f, const Jet& j);
    bool block_is_zero(std::size_t f) const;

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    /// Same slots and metadata, all components zero.
    ChartTensor zeros_like() const;
    ChartTensor truncated(int order) const;
    /// Constant field with this tensor's values (only valid for order 0 input).
    ChartTensor promoted(int order) const;
    /// Coordinate derivative of every component; order drops by one.
    ChartTensor partial(int var) const;

    /// Largest absolute value over the degree-0 coefficients.
    double max_abs() const;

private:
    int n_ = 0;
    std::vector<SlotKind> slots_;
    std::vector<int> extents_;
    std::vector<std::size_t> strides_;
    double weight_ = 0.0;
    int order_ = 0;
    std::string scale_;
    std::size_t ncoef_ = 1;
    std::size_t ncomp_ = 1;
    std::vector<double> data_;
};

/// Scale tags are compatible when equal or when either is empty; returns the merged tag.
std::string merge_scale(const std::string& a, const std::string& b);

ChartTensor operator+(const ChartTensor& a, const ChartTensor& b);
ChartTensor operator-(const ChartTensor& a, const ChartTensor& b);
ChartTensor operator*(double s, const ChartTensor& a);
ChartTensor& operator+=(ChartTensor& a, const ChartTensor& b);
ChartTensor& operator-=(ChartTensor& a, const ChartTensor& b);
double max_abs_diff(const ChartTensor& a, const ChartTensor& b);

/// Output slot i takes input slot perm[i].
ChartTensor permute(const ChartTensor& t, std::span<const int> perm);
ChartTensor permute(const ChartTensor& t, std::initializer_list<int> perm);

ChartTensor symmetrize(const ChartTensor& t, std::span<const int> slot_set);
ChartTensor symmetrize(const ChartTensor& t, std::initializer_list<int> slot_set);
ChartTensor antisymmetrize(const ChartTensor& t, std::span<const int> slot_set);
ChartTensor antisymmetrize(const ChartTensor& t, std::initializer_list<int> slot_set);

/// S_(1..r) S_(r+1..2r) S_[1,r+1] ... S_[r,2r], composed as written (no normalization).
ChartTensor young_project_rr(const ChartTensor& t, int r);

ChartTensor contract(const ChartTensor& t, int slot_a, int slot_b);
ChartTensor tensor_product(const ChartTensor& a, const ChartTensor& b);

/// Index-label contraction, e.g. einsum("aBC,C->aB", {A, V}). Labels are single
/// characters; a label repeated across inputs is summed and must pair dual kinds.
ChartTensor einsum(std::string_view spec, std::initializer_list<const ChartTensor*> inputs);
ChartTensor einsum(std::string_view spec, std::span<const ChartTensor* const> inputs);

/// Kronecker delta with one upper and one lower slot of the given kinds.
ChartTensor delta(int n, SlotKind upper, SlotKind lower);

}  // namespace ptk
