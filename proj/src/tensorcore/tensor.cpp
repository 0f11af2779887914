#include "ptk/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <tuple>

#include <Eigen/Dense>

#include "ptk/errors.hpp"

namespace ptk {

SlotKind dual_kind(SlotKind k) {
    switch (k) {
        case SlotKind::tangent: return SlotKind::cotangent;
        case SlotKind::cotangent: return SlotKind::tangent;
        case SlotKind::tractor: return SlotKind::cotractor;
        case SlotKind::cotractor: return SlotKind::tractor;
    }
    return k;
}

const char* kind_name(SlotKind k) {
    switch (k) {
        case SlotKind::tangent: return "tangent";
        case SlotKind::cotangent: return "cotangent";
        case SlotKind::tractor: return "tractor";
        case SlotKind::cotractor: return "cotractor";
    }
    return "?";
}

ChartTensor::ChartTensor(int n, std::vector<SlotKind> slots, double weight, int order,
                         std::string scale_tag)
    : n_(n), slots_(std::move(slots)), weight_(weight), order_(order), scale_(std::move(scale_tag)) {
    if (n < 1) throw ShapeError("chart dimension must be positive");
    ncoef_ = order == 0 ? 1 : JetSpace::of(n).size(order);
    extents_.resize(slots_.size());
    strides_.resize(slots_.size());
    for (std::size_t i = 0; i < slots_.size(); ++i) extents_[i] = is_tractor_kind(slots_[i]) ? n + 1 : n;
    ncomp_ = 1;
    for (std::size_t i = slots_.size(); i-- > 0;) {
        strides_[i] = ncomp_;
        ncomp_ *= static_cast<std::size_t>(extents_[i]);
    }
    data_.assign(ncomp_ * ncoef_, 0.0);
}

std::size_t ChartTensor::flat(std::span<const int> idx) const {
    if (idx.size() != slots_.size()) throw ShapeError("index count does not match tensor rank");
    std::size_t f = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= extents_[i]) throw ShapeError("tensor index out of range");
        f += strides_[i] * static_cast<std::size_t>(idx[i]);
    }
    return f;
}

std::vector<int> ChartTensor::unflat(std::size_t f) const {
    std::vector<int> idx(slots_.size());
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        idx[i] = static_cast<int>(f / strides_[i]);
        f %= strides_[i];
    }
    return idx;
}

Jet ChartTensor::jet(std::size_t f) const {
    Jet j(n_, order_);
    auto src = coeffs(f);
    std::copy(src.begin(), src.end(), j.coeffs().begin());
    return j;
}

void ChartTensor::set_jet(std::size_t f, const Jet& j) {
    if (j.dim() != n_ || j.order() != order_) throw ShapeError("jet shape does not match tensor");
    std::copy(j.coeffs().begin(), j.coeffs().end(), coeffs(f).begin());
}

bool ChartTensor::block_is_zero(std::size_t f) const {
    auto c = coeffs(f);
    return std::all_of(c.begin(), c.end(), [](double v) { return v == 0.0; });
}

ChartTensor ChartTensor::zeros_like() const {
    ChartTensor t = *this;
    std::fill(t.data_.begin(), t.data_.end(), 0.0);
    return t;
}

ChartTensor ChartTensor::truncated(int order) const {
    if (order > order_) throw OrderError("cannot raise tensor jet order by truncation");
    if (order == order_) return *this;
    ChartTensor t(n_, slots_, weight_, order, scale_);
    for (std::size_t f = 0; f < ncomp_; ++f)
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(f * ncoef_), t.ncoef_,
                    t.data_.begin() + static_cast<std::ptrdiff_t>(f * t.ncoef_));
    return t;
}

ChartTensor ChartTensor::promoted(int order) const {
    if (order_ != 0) throw OrderError("only pointwise tensors can be promoted to constant fields");
    ChartTensor t(n_, slots_, weight_, order, scale_);
    for (std::size_t f = 0; f < ncomp_; ++f) t.data_[f * t.ncoef_] = data_[f];
    return t;
}

ChartTensor ChartTensor::partial(int var) const {
    if (order_ < 1) throw OrderError("tensor field has no derivative information left (jet order 0)");
    if (var < 0 || var >= n_) throw ShapeError("derivative variable out of range");
    ChartTensor t(n_, slots_, weight_, order_ - 1, scale_);
    const auto& s = JetSpace::of(n_);
    for (std::size_t f = 0; f < ncomp_; ++f)
        jetk::derivative(s, order_, var, data_.data() + f * ncoef_, t.data_.data() + f * t.ncoef_);
    return t;
}

double ChartTensor::max_abs() const {
    double m = 0.0;
    for (std::size_t f = 0; f < ncomp_; ++f) m = std::max(m, std::abs(data_[f * ncoef_]));
    return m;
}

std::string merge_scale(const std::string& a, const std::string& b) {
    if (a.empty()) return b;
    if (b.empty() || a == b) return a;
    throw ScaleError("tensors expressed in different scales: '" + a + "' vs '" + b + "'");
}

namespace {

void require_same_shape(const ChartTensor& a, const ChartTensor& b, const char* what) {
    if (a.n() != b.n() || a.slots() != b.slots() || a.order() != b.order())
        throw ShapeError(std::string(what) + ": tensors have different slots or jet orders");
    if (a.weight() != b.weight())
        throw ShapeError(std::string(what) + ": tensors have different weights");
}

}  // namespace

ChartTensor& operator+=(ChartTensor& a, const ChartTensor& b) {
    require_same_shape(a, b, "add");
    a.set_scale_tag(merge_scale(a.scale_tag(), b.scale_tag()));
    auto d = a.data();
    auto s = b.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
    return a;
}

ChartTensor& operator-=(ChartTensor& a, const ChartTensor& b) {
    require_same_shape(a, b, "sub");
    a.set_scale_tag(merge_scale(a.scale_tag(), b.scale_tag()));
    auto d = a.data();
    auto s = b.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= s[i];
    return a;
}

ChartTensor operator+(const ChartTensor& a, const ChartTensor& b) {
    ChartTensor t = a;
    return t += b;
}

ChartTensor operator-(const ChartTensor& a, const ChartTensor& b) {
    ChartTensor t = a;
    return t -= b;
}

ChartTensor operator*(double s, const ChartTensor& a) {
    ChartTensor t = a;
    for (auto& v : t.data()) v *= s;
    return t;
}

double max_abs_diff(const ChartTensor& a, const ChartTensor& b) {
    if (a.n() != b.n() || a.slots() != b.slots())
        throw ShapeError("max_abs_diff: tensors have different slots");
    double m = 0.0;
    for (std::size_t f = 0; f < a.ncomp(); ++f) m = std::max(m, std::abs(a.value(f) - b.value(f)));
    return m;
}

// ---------------------------------------------------------------------------
// Permutations

namespace {

struct PermKey {
    std::vector<int> extents;
    std::vector<int> perm;
    bool operator<(const PermKey& o) const {
        return std::tie(extents, perm) < std::tie(o.extents, o.perm);
    }
};

// For output component f, the input component that supplies it.
const std::vector<std::uint32_t>& permutation_table(const std::vector<int>& in_extents,
                                                    const std::vector<int>& perm) {
    static std::mutex m;
    static std::map<PermKey, std::vector<std::uint32_t>> cache;
    std::lock_guard lock(m);
    PermKey key{in_extents, perm};
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    const std::size_t r = perm.size();
    std::vector<std::size_t> in_strides(r);
    std::size_t total = 1;
    for (std::size_t i = r; i-- > 0;) {
        in_strides[i] = total;
        total *= static_cast<std::size_t>(in_extents[i]);
    }
    std::vector<int> out_extents(r);
    for (std::size_t i = 0; i < r; ++i) out_extents[i] = in_extents[perm[i]];
    std::vector<std::uint32_t> table(total);
    std::vector<int> idx(r, 0);
    for (std::size_t f = 0; f < total; ++f) {
        std::size_t src = 0;
        for (std::size_t i = 0; i < r; ++i) src += in_strides[perm[i]] * static_cast<std::size_t>(idx[i]);
        table[f] = static_cast<std::uint32_t>(src);
        for (std::size_t i = r; i-- > 0;) {
            if (++idx[i] < out_extents[i]) break;
            idx[i] = 0;
        }
    }
    return cache.emplace(std::move(key), std::move(table)).first->second;
}

void check_perm(std::span<const int> perm, int rank) {
    if (static_cast<int>(perm.size()) != rank) throw ShapeError("permutation length does not match rank");
    std::vector<bool> seen(rank, false);
    for (int p : perm) {
        if (p < 0 || p >= rank || seen[p]) throw ShapeError("invalid permutation");
        seen[p] = true;
    }
}

// out += s * permute(t, perm)
void accumulate_permuted(const ChartTensor& t, const std::vector<int>& perm, double s, ChartTensor& out) {
    const auto& table = permutation_table(t.extents(), perm);
    const std::size_t nc = t.ncoef();
    auto src = t.data();
    auto dst = out.data();
    for (std::size_t f = 0; f < table.size(); ++f) {
        const double* a = src.data() + table[f] * nc;
        double* b = dst.data() + f * nc;
        for (std::size_t k = 0; k < nc; ++k) b[k] += s * a[k];
    }
}

void check_slot_set(const ChartTensor& t, std::span<const int> slots) {
    std::vector<bool> seen(t.rank(), false);
    for (int s : slots) {
        if (s < 0 || s >= t.rank() || seen[s]) throw ShapeError("invalid slot set");
        seen[s] = true;
        if (t.kind(s) != t.kind(slots[0]))
            throw ShapeError("slot set mixes index kinds (" + std::string(kind_name(t.kind(s))) + " and " +
                             kind_name(t.kind(slots[0])) + ")");
    }
}

int parity(const std::vector<int>& p) {
    int sign = 1;
    std::vector<bool> seen(p.size(), false);
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (seen[i]) continue;
        std::size_t len = 0;
        for (std::size_t j = i; !seen[j]; j = static_cast<std::size_t>(p[j])) {
            seen[j] = true;
            ++len;
        }
        if (len % 2 == 0) sign = -sign;
    }
    return sign;
}

ChartTensor average_over(const ChartTensor& t, std::span<const int> slots, bool signed_average) {
    check_slot_set(t, slots);
    if (slots.size() <= 1) return t;
    std::vector<int> sorted(slots.begin(), slots.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> local(sorted.size());
    std::iota(local.begin(), local.end(), 0);
    ChartTensor out = t.zeros_like();
    double count = 0;
    do {
        ++count;
    } while (std::next_permutation(local.begin(), local.end()));
    std::iota(local.begin(), local.end(), 0);
    do {
        std::vector<int> perm(t.rank());
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = 0; i < sorted.size(); ++i) perm[sorted[i]] = sorted[local[i]];
        const double s = signed_average ? parity(local) / count : 1.0 / count;
        accumulate_permuted(t, perm, s, out);
    } while (std::next_permutation(local.begin(), local.end()));
    return out;
}

}  // namespace

ChartTensor permute(const ChartTensor& t, std::span<const int> perm) {
    check_perm(perm, t.rank());
    std::vector<SlotKind> slots(t.rank());
    for (int i = 0; i < t.rank(); ++i) slots[i] = t.kind(perm[i]);
    ChartTensor out(t.n(), slots, t.weight(), t.order(), t.scale_tag());
    accumulate_permuted(t, std::vector<int>(perm.begin(), perm.end()), 1.0, out);
    return out;
}

ChartTensor permute(const ChartTensor& t, std::initializer_list<int> perm) {
    return permute(t, std::span<const int>(perm.begin(), perm.size()));
}

ChartTensor symmetrize(const ChartTensor& t, std::span<const int> slot_set) {
    return average_over(t, slot_set, false);
}
ChartTensor symmetrize(const ChartTensor& t, std::initializer_list<int> slot_set) {
    return average_over(t, std::span<const int>(slot_set.begin(), slot_set.size()), false);
}
ChartTensor antisymmetrize(const ChartTensor& t, std::span<const int> slot_set) {
    return average_over(t, slot_set, true);
}
ChartTensor antisymmetrize(const ChartTensor& t, std::initializer_list<int> slot_set) {
    return average_over(t, std::span<const int>(slot_set.begin(), slot_set.size()), true);
}

ChartTensor young_project_rr(const ChartTensor& t, int r) {
    if (r < 1 || t.rank() != 2 * r)
        throw ShapeError("young projection of type (r,r) needs exactly 2r slots");
    for (int i = 1; i < t.rank(); ++i)
        if (t.kind(i) != t.kind(0)) throw ShapeError("young projection needs slots of one kind");
    if (!is_tractor_kind(t.kind(0))) throw ShapeError("young projection acts on tractor-type slots");
    ChartTensor out = t;
    for (int i = r - 1; i >= 0; --i) out = antisymmetrize(out, {i, r + i});
    std::vector<int> first(r), last(r);
    std::iota(first.begin(), first.end(), 0);
    std::iota(last.begin(), last.end(), r);
    out = symmetrize(out, last);
    return symmetrize(out, first);
}

// ---------------------------------------------------------------------------
// Contraction and products

namespace {

struct Occurrence {
    int operand;
    int slot;
};

// Matrix position (row, col) of every component of a tensor, row-major over its slots,
// given per-slot strides into the row and column index.
void matrix_positions(const std::vector<int>& ext, const std::vector<std::size_t>& rs,
                      const std::vector<std::size_t>& cs, std::vector<std::size_t>& row,
                      std::vector<std::size_t>& col) {
    std::size_t total = 1;
    for (int e : ext) total *= static_cast<std::size_t>(e);
    row.assign(total, 0);
    col.assign(total, 0);
    std::vector<int> idx(ext.size(), 0);
    std::size_t r = 0, c = 0;
    for (std::size_t f = 0; f < total; ++f) {
        row[f] = r;
        col[f] = c;
        for (std::size_t s = ext.size(); s-- > 0;) {
            if (++idx[s] < ext[s]) {
                r += rs[s];
                c += cs[s];
                break;
            }
            r -= rs[s] * static_cast<std::size_t>(ext[s] - 1);
            c -= cs[s] * static_cast<std::size_t>(ext[s] - 1);
            idx[s] = 0;
        }
    }
}

// Index plan of a two-operand contraction: matrix shapes and the (row, col) position of
// every component of A, B and the output.
struct GemmPlan {
    std::size_t rows = 0, inner = 0, cols = 0;
    std::vector<std::size_t> a_row, a_col, b_row, b_col, o_row, o_col;
};

GemmPlan make_plan(const ChartTensor& A, std::string_view la, const ChartTensor& B, std::string_view lb,
                   std::string_view lo, const ChartTensor& out) {
    std::string freeA, freeB, summed;
    for (char c : la) (lb.find(c) == std::string_view::npos ? freeA : summed) += c;
    for (char c : lb)
        if (la.find(c) == std::string_view::npos) freeB += c;
    auto extent_of = [&](char c) {
        const auto p = la.find(c);
        return p != std::string_view::npos ? A.extent(static_cast<int>(p))
                                           : B.extent(static_cast<int>(lb.find(c)));
    };
    // row-major strides of each label within its group
    std::array<std::size_t, 128> stride_in_group{};
    auto group_size = [&](const std::string& group) {
        std::size_t acc = 1;
        for (std::size_t i = group.size(); i-- > 0;) {
            stride_in_group[static_cast<unsigned char>(group[i])] = acc;
            acc *= static_cast<std::size_t>(extent_of(group[i]));
        }
        return acc;
    };
    GemmPlan plan;
    plan.rows = group_size(freeA);
    plan.inner = group_size(summed);
    plan.cols = group_size(freeB);
    auto positions = [&](const ChartTensor& t, std::string_view labels, const std::string& row_group,
                         std::vector<std::size_t>& row, std::vector<std::size_t>& col) {
        std::vector<std::size_t> rs(labels.size(), 0), cs(labels.size(), 0);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const std::size_t st = stride_in_group[static_cast<unsigned char>(labels[i])];
            (row_group.find(labels[i]) != std::string::npos ? rs : cs)[i] = st;
        }
        matrix_positions(t.extents(), rs, cs, row, col);
    };
    positions(A, la, freeA, plan.a_row, plan.a_col);
    positions(B, lb, summed, plan.b_row, plan.b_col);
    positions(out, lo, freeA, plan.o_row, plan.o_col);
    return plan;
}

const GemmPlan& cached_plan(const ChartTensor& A, std::string_view la, const ChartTensor& B,
                            std::string_view lb, std::string_view lo, const ChartTensor& out) {
    thread_local std::map<std::string, GemmPlan> cache;
    std::string key;
    key.reserve(la.size() + lb.size() + lo.size() + 16);
    key.append(la).append(",").append(lb).append("->").append(lo).append(":");
    for (int e : A.extents()) key += static_cast<char>('0' + e);
    key += ',';
    for (int e : B.extents()) key += static_cast<char>('0' + e);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    if (cache.size() > 4096) cache.clear();
    return cache.emplace(std::move(key), make_plan(A, la, B, lb, lo, out)).first->second;
}

// Two-operand contraction as a product of coefficient matrices: every label of `la`
// and `lb` occurs either in both (summed) or in `lo` (free), and no label repeats
// within one operand.
void einsum_gemm(const ChartTensor& A, std::string_view la, const ChartTensor& B, std::string_view lb,
                 std::string_view lo, ChartTensor& out) {
    const GemmPlan& plan = cached_plan(A, la, B, lb, lo, out);
    const std::size_t nc = out.ncoef();
    using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    auto load = [&](const ChartTensor& t, const std::vector<std::size_t>& row, const std::vector<std::size_t>& col,
                    std::size_t nr, std::size_t ncol, std::vector<Mat>& mats, std::vector<char>& nonzero) {
        mats.assign(nc, Mat());
        nonzero.assign(nc, 0);
        const auto data = t.data();
        for (std::size_t f = 0; f < row.size(); ++f) {
            const double* blk = data.data() + f * nc;
            for (std::size_t k = 0; k < nc; ++k) {
                if (blk[k] == 0.0) continue;
                if (!nonzero[k]) {
                    mats[k] = Mat::Zero(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(ncol));
                    nonzero[k] = 1;
                }
                mats[k](static_cast<Eigen::Index>(row[f]), static_cast<Eigen::Index>(col[f])) = blk[k];
            }
        }
    };
    std::vector<Mat> MA, MB;
    std::vector<char> nzA, nzB;
    load(A, plan.a_row, plan.a_col, plan.rows, plan.inner, MA, nzA);
    load(B, plan.b_row, plan.b_col, plan.inner, plan.cols, MB, nzB);

    std::vector<Mat> MC(nc);
    std::vector<char> nzC(nc, 0);
    auto accumulate = [&](std::size_t i, std::size_t j, std::size_t k) {
        if (!nzA[i] || !nzB[j]) return;
        if (!nzC[k]) {
            MC[k].noalias() = MA[i] * MB[j];
            nzC[k] = 1;
        } else {
            MC[k].noalias() += MA[i] * MB[j];
        }
    };
    if (out.order() == 0) {
        accumulate(0, 0, 0);
    } else {
        for (const auto& p : JetSpace::of(out.n()).products(out.order())) accumulate(p.lhs, p.rhs, p.out);
    }

    auto data = out.data();
    for (std::size_t k = 0; k < nc; ++k) {
        if (!nzC[k]) continue;
        const Mat& m = MC[k];
        for (std::size_t f = 0; f < plan.o_row.size(); ++f)
            data[f * nc + k] =
                m(static_cast<Eigen::Index>(plan.o_row[f]), static_cast<Eigen::Index>(plan.o_col[f]));
    }
}

}  // namespace

ChartTensor einsum(std::string_view spec, std::span<const ChartTensor* const> inputs) {
    const auto arrow = spec.find("->");
    if (arrow == std::string_view::npos) throw ShapeError("einsum spec needs '->'");
    const std::string_view lhs = spec.substr(0, arrow);
    const std::string_view out_labels = spec.substr(arrow + 2);
    std::vector<std::string_view> in_labels;
    for (std::size_t start = 0;;) {
        const auto comma = lhs.find(',', start);
        in_labels.push_back(lhs.substr(start, comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    if (in_labels.size() != inputs.size()) throw ShapeError("einsum operand count mismatch");

    const ChartTensor& first = *inputs[0];
    const int n = first.n();
    const int order = first.order();
    double weight = 0.0;
    std::string scale;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const ChartTensor& t = *inputs[k];
        if (static_cast<int>(in_labels[k].size()) != t.rank())
            throw ShapeError("einsum labels '" + std::string(in_labels[k]) + "' do not match rank " +
                             std::to_string(t.rank()));
        if (t.n() != n) throw ShapeError("einsum operands have different chart dimensions");
        if (t.order() != order) throw ShapeError("einsum operands have different jet orders");
        weight += t.weight();
        scale = merge_scale(scale, t.scale_tag());
    }

    // Labels in order of first appearance.
    std::array<std::vector<Occurrence>, 128> occ;
    std::vector<char> labels;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::size_t s = 0; s < in_labels[k].size(); ++s) {
            const auto c = static_cast<unsigned char>(in_labels[k][s]);
            if (c >= 128) throw ShapeError("einsum label out of range");
            if (occ[c].empty()) labels.push_back(static_cast<char>(c));
            occ[c].push_back({static_cast<int>(k), static_cast<int>(s)});
        }
    }
    std::vector<SlotKind> out_slots;
    for (char c : out_labels) {
        const auto& o = occ[static_cast<unsigned char>(c)];
        if (o.size() != 1)
            throw ShapeError(std::string("einsum output label '") + c + "' must occur once in the inputs");
        out_slots.push_back(inputs[o[0].operand]->kind(o[0].slot));
    }
    for (char c : labels) {
        const auto& o = occ[static_cast<unsigned char>(c)];
        if (out_labels.find(c) != std::string_view::npos) continue;
        if (o.size() != 2) throw ShapeError(std::string("einsum label '") + c + "' must occur twice");
        const SlotKind a = inputs[o[0].operand]->kind(o[0].slot);
        const SlotKind b = inputs[o[1].operand]->kind(o[1].slot);
        if (dual_kind(a) != b)
            throw ShapeError(std::string("einsum label '") + c + "' contracts " + kind_name(a) + " with " +
                             kind_name(b));
    }

    // More than two operands: contract pairwise, each step absorbing the operand that
    // shares the most labels with the running result.
    if (inputs.size() > 2) {
        std::vector<ChartTensor> keep;
        keep.reserve(inputs.size());
        const ChartTensor* cur = inputs[0];
        std::string cur_labels(in_labels[0]);
        std::vector<std::size_t> rest;
        for (std::size_t k = 1; k < inputs.size(); ++k) rest.push_back(k);
        while (!rest.empty()) {
            std::size_t pick = 0;
            int best = -1;
            for (std::size_t i = 0; i < rest.size(); ++i) {
                int shared = 0;
                for (char c : in_labels[rest[i]]) shared += cur_labels.find(c) != std::string::npos;
                if (shared > best) {
                    best = shared;
                    pick = i;
                }
            }
            const std::size_t k = rest[pick];
            rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(pick));
            std::string later(out_labels);
            for (std::size_t r : rest) later += in_labels[r];
            std::string next;
            for (char c : cur_labels + std::string(in_labels[k]))
                if (later.find(c) != std::string::npos && next.find(c) == std::string::npos) next += c;
            if (rest.empty()) next = std::string(out_labels);
            const std::string sub = cur_labels + "," + std::string(in_labels[k]) + "->" + next;
            keep.push_back(einsum(sub, {cur, inputs[k]}));
            cur = &keep.back();
            cur_labels = next;
        }
        return keep.back();
    }

    ChartTensor out(n, out_slots, weight, order, scale);

    bool repeated_within = false;
    for (char c : labels) {
        const auto& o = occ[static_cast<unsigned char>(c)];
        if (o.size() == 2 && o[0].operand == o[1].operand) repeated_within = true;
    }
    if (inputs.size() == 2 && !repeated_within) {
        einsum_gemm(*inputs[0], in_labels[0], *inputs[1], in_labels[1], out_labels, out);
        return out;
    }

    // Strides per label level.
    const std::size_t nl = labels.size();
    const std::size_t nops = inputs.size();
    std::vector<int> level_extent(nl);
    std::vector<std::vector<std::size_t>> op_stride(nl, std::vector<std::size_t>(nops, 0));
    std::vector<std::size_t> out_stride(nl, 0);
    std::vector<int> complete_level(nops, 0);  // operand fully bound once this many labels are
    for (std::size_t L = 0; L < nl; ++L) {
        const char c = labels[L];
        const auto& o = occ[static_cast<unsigned char>(c)];
        level_extent[L] = inputs[o[0].operand]->extent(o[0].slot);
        for (const auto& e : o) {
            const ChartTensor& t = *inputs[e.operand];
            std::vector<int> idx(t.rank(), 0);
            idx[e.slot] = 1;
            op_stride[L][e.operand] += t.flat(idx);
            complete_level[e.operand] = std::max(complete_level[e.operand], static_cast<int>(L) + 1);
        }
        const auto pos = out_labels.find(c);
        if (pos != std::string_view::npos) {
            std::vector<int> idx(out.rank(), 0);
            idx[pos] = 1;
            out_stride[L] = out.flat(idx);
        }
    }
    std::vector<std::vector<int>> completes_at(nl + 1);
    for (std::size_t k = 0; k < nops; ++k) completes_at[complete_level[k]].push_back(static_cast<int>(k));
    // position of each operand in the running product
    std::vector<int> position(nops);
    for (int p = 0; const auto& group : completes_at)
        for (int k : group) position[k] = p++;

    const std::size_t nc = out.ncoef();
    const JetSpace* space = order > 0 ? &JetSpace::of(n) : nullptr;
    std::vector<std::vector<double>> partial(nops, std::vector<double>(nc));
    std::vector<std::size_t> offs(nops, 0);
    auto out_data = out.data();

    // Multiplies in the operands completed at level L; false on a zero block.
    auto absorb = [&](std::size_t L) -> bool {
        for (int k : completes_at[L]) {
            const double* blk = inputs[k]->data().data() + offs[k] * nc;
            if (std::all_of(blk, blk + nc, [](double v) { return v == 0.0; })) return false;
            const int p = position[k];
            auto& dst = partial[p];
            if (p == 0) {
                std::copy(blk, blk + nc, dst.begin());
            } else if (nc == 1) {
                dst[0] = partial[p - 1][0] * blk[0];
            } else {
                std::fill(dst.begin(), dst.end(), 0.0);
                jetk::mul_acc(*space, order, partial[p - 1].data(), blk, dst.data());
            }
        }
        return true;
    };

    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t L, std::size_t out_off) {
        if (L == nl) {
            const auto& prod = partial[nops - 1];
            double* dst = out_data.data() + out_off * nc;
            for (std::size_t i = 0; i < nc; ++i) dst[i] += prod[i];
            return;
        }
        for (int v = 0; v < level_extent[L]; ++v) {
            const auto sv = static_cast<std::size_t>(v);
            for (std::size_t k = 0; k < nops; ++k) offs[k] += op_stride[L][k] * sv;
            if (absorb(L + 1)) rec(L + 1, out_off + out_stride[L] * sv);
            for (std::size_t k = 0; k < nops; ++k) offs[k] -= op_stride[L][k] * sv;
        }
    };
    if (absorb(0)) rec(0, 0);
    return out;
}

ChartTensor einsum(std::string_view spec, std::initializer_list<const ChartTensor*> inputs) {
    return einsum(spec, std::span<const ChartTensor* const>(inputs.begin(), inputs.size()));
}

namespace {
std::string label_run(int start, int count) {
    static const std::string pool = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";
    if (start + count > static_cast<int>(pool.size())) throw ShapeError("tensor rank too large for einsum");
    return pool.substr(static_cast<std::size_t>(start), static_cast<std::size_t>(count));
}
}  // namespace

ChartTensor contract(const ChartTensor& t, int slot_a, int slot_b) {
    if (slot_a == slot_b || slot_a < 0 || slot_b < 0 || slot_a >= t.rank() || slot_b >= t.rank())
        throw ShapeError("invalid contraction slots");
    if (dual_kind(t.kind(slot_a)) != t.kind(slot_b))
        throw ShapeError(std::string("cannot contract ") + kind_name(t.kind(slot_a)) + " with " +
                         kind_name(t.kind(slot_b)));
    std::string in = label_run(0, t.rank());
    in[slot_b] = in[slot_a];
    std::string out;
    for (int i = 0; i < t.rank(); ++i)
        if (i != slot_a && i != slot_b) out += in[i];
    return einsum(in + "->" + out, {&t});
}

ChartTensor tensor_product(const ChartTensor& a, const ChartTensor& b) {
    const std::string la = label_run(0, a.rank());
    const std::string lb = label_run(a.rank(), b.rank());
    return einsum(la + "," + lb + "->" + la + lb, {&a, &b});
}

ChartTensor delta(int n, SlotKind upper, SlotKind lower) {
    if (dual_kind(upper) != lower || !is_upper(upper)) throw ShapeError("delta needs an upper and its dual lower slot");
    ChartTensor d(n, {upper, lower});
    for (int i = 0; i < d.extent(0); ++i) d({i, i}) = 1.0;
    return d;
}

}  // namespace ptk
