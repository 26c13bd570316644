#include "collis/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace collis {

namespace {

constexpr double kProbFloor = 1e-12;

double safe_log(double p) { return std::log(std::max(p, kProbFloor)); }

void check_shapes(const Eigen::MatrixXd& probs, const Eigen::VectorXi& targets, const Mask& mask) {
    if (targets.size() != probs.rows()) throw DataError("target length mismatch");
    if (static_cast<Eigen::Index>(mask.size()) != probs.rows())
        throw DataError("mask length mismatch");
    for (Eigen::Index i = 0; i < targets.size(); ++i)
        if (mask[i] && (targets[i] < 0 || targets[i] >= probs.cols()))
            throw DataError("target class out of range");
}

// Chains a gradient at probabilities through the softmax: for each row,
// dz_k = p_k * (dp_k - <dp, p>).
Eigen::MatrixXd chain_softmax(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& dprobs) {
    Eigen::MatrixXd dz(probs.rows(), probs.cols());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        const double dot = dprobs.row(i).dot(probs.row(i));
        dz.row(i) = probs.row(i).array() * (dprobs.row(i).array() - dot);
    }
    return dz;
}

}  // namespace

LossValue make_zero_loss(Eigen::Index m, Eigen::Index k) {
    LossValue lv;
    lv.grad_logits = Eigen::MatrixXd::Zero(m, k);
    return lv;
}

LossValue cross_entropy(const Eigen::MatrixXd& probs, const Eigen::VectorXi& targets,
                        const Mask& mask) {
    check_shapes(probs, targets, mask);
    const auto count = static_cast<std::int64_t>(mask_count(mask));
    if (count == 0) return make_zero_loss(probs.rows(), probs.cols());

    LossValue lv = make_zero_loss(probs.rows(), probs.cols());
    lv.count = count;
    const double inv = 1.0 / static_cast<double>(count);
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        if (!mask[i]) continue;
        lv.value -= safe_log(probs(i, targets[i])) * inv;
        lv.grad_logits.row(i) = probs.row(i) * inv;
        lv.grad_logits(i, targets[i]) -= inv;
    }
    return lv;
}

double lovasz_single_class(const Eigen::VectorXd& class_probs,
                           const std::vector<int>& foreground) {
    const auto m = static_cast<std::size_t>(class_probs.size());
    if (foreground.size() != m) throw DataError("foreground length mismatch");

    std::vector<double> errors(m);
    std::int64_t total_fg = 0;
    for (std::size_t i = 0; i < m; ++i) {
        errors[i] = foreground[i] ? 1.0 - class_probs[i] : class_probs[i];
        total_fg += foreground[i] ? 1 : 0;
    }

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (errors[a] != errors[b]) return errors[a] > errors[b];
        return a < b;
    });

    double value = 0.0;
    double prev_jaccard = 0.0;
    std::int64_t inter = total_fg;
    std::int64_t uni = total_fg;
    for (std::size_t r = 0; r < m; ++r) {
        const std::size_t i = order[r];
        inter -= foreground[i] ? 1 : 0;
        uni += foreground[i] ? 0 : 1;
        const double jaccard =
            uni > 0 ? 1.0 - static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
        value += errors[i] * (jaccard - prev_jaccard);
        prev_jaccard = jaccard;
    }
    return value;
}

LossValue lovasz_softmax(const Eigen::MatrixXd& probs, const Eigen::VectorXi& targets,
                         const Mask& mask) {
    check_shapes(probs, targets, mask);
    const auto count = static_cast<std::int64_t>(mask_count(mask));
    if (count == 0) return make_zero_loss(probs.rows(), probs.cols());

    std::vector<Eigen::Index> rows;
    rows.reserve(count);
    for (Eigen::Index i = 0; i < probs.rows(); ++i)
        if (mask[i]) rows.push_back(i);

    std::vector<int> present;
    {
        std::vector<char> seen(probs.cols(), 0);
        for (Eigen::Index i : rows) seen[targets[i]] = 1;
        for (int c = 0; c < probs.cols(); ++c)
            if (seen[c]) present.push_back(c);
    }

    const std::size_t m = rows.size();
    Eigen::MatrixXd dprobs = Eigen::MatrixXd::Zero(probs.rows(), probs.cols());
    double value = 0.0;

    std::vector<double> errors(m);
    std::vector<int> fg(m);
    std::vector<std::size_t> order(m);
    for (int c : present) {
        std::int64_t total_fg = 0;
        for (std::size_t r = 0; r < m; ++r) {
            fg[r] = targets[rows[r]] == c ? 1 : 0;
            errors[r] = fg[r] ? 1.0 - probs(rows[r], c) : probs(rows[r], c);
            total_fg += fg[r];
        }
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (errors[a] != errors[b]) return errors[a] > errors[b];
            return a < b;
        });

        double prev_jaccard = 0.0;
        std::int64_t inter = total_fg;
        std::int64_t uni = total_fg;
        for (std::size_t r = 0; r < m; ++r) {
            const std::size_t i = order[r];
            inter -= fg[i];
            uni += fg[i] ? 0 : 1;
            const double jaccard =
                uni > 0 ? 1.0 - static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
            const double g = jaccard - prev_jaccard;
            prev_jaccard = jaccard;
            value += errors[i] * g;
            // d error / d p_c is -1 on foreground and +1 elsewhere.
            dprobs(rows[i], c) += (fg[i] ? -g : g);
        }
    }

    const double inv = 1.0 / static_cast<double>(present.size());
    LossValue lv;
    lv.value = value * inv;
    lv.grad_logits = chain_softmax(probs, dprobs * inv);
    lv.count = count;
    return lv;
}

LossValue labeled_loss(const Eigen::MatrixXd& probs, const Eigen::VectorXi& targets,
                       const Mask& mask) {
    LossValue ce = cross_entropy(probs, targets, mask);
    const LossValue lov = lovasz_softmax(probs, targets, mask);
    ce.value += lov.value;
    ce.grad_logits += lov.grad_logits;
    return ce;
}

LossValue unlabeled_loss(const Eigen::MatrixXd& probs, const std::vector<PseudoSource>& sources,
                         double lambda_u) {
    LossValue total = make_zero_loss(probs.rows(), probs.cols());
    if (sources.empty() || lambda_u == 0.0) return total;
    for (const PseudoSource& src : sources) {
        const LossValue part = labeled_loss(probs, src.labels, src.mask);
        total.value += lambda_u * src.weight * part.value;
        total.grad_logits += (lambda_u * src.weight) * part.grad_logits;
        total.count += part.count;
    }
    return total;
}

double uniform_nll(const Eigen::VectorXd& prob_row) {
    double v = 0.0;
    for (Eigen::Index k = 0; k < prob_row.size(); ++k) v -= safe_log(prob_row[k]);
    return v / static_cast<double>(prob_row.size());
}

LossValue regularization_loss(const Eigen::MatrixXd& probs, const Mask& mask, double lambda_reg) {
    if (static_cast<Eigen::Index>(mask.size()) != probs.rows())
        throw DataError("mask length mismatch");
    const auto count = static_cast<std::int64_t>(mask_count(mask));
    if (count == 0) return make_zero_loss(probs.rows(), probs.cols());

    const auto k = probs.cols();
    LossValue lv = make_zero_loss(probs.rows(), k);
    lv.count = count;
    const double scale = lambda_reg / static_cast<double>(count);
    const double uniform = 1.0 / static_cast<double>(k);
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        if (!mask[i]) continue;
        lv.value += scale * uniform_nll(probs.row(i).transpose());
        lv.grad_logits.row(i) = scale * (probs.row(i).array() - uniform);
    }
    return lv;
}

}  // namespace collis
