#include "collis/metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "collis/losses.hpp"

namespace collis {

ConfusionMatrix::ConfusionMatrix(int num_classes) {
    if (num_classes < 2) throw ConfigError("confusion matrix needs at least 2 classes");
    counts_.setZero(num_classes, num_classes);
}

void ConfusionMatrix::accumulate(const Eigen::VectorXi& truths, const Eigen::VectorXi& predictions,
                                 const Mask& mask) {
    if (truths.size() != predictions.size() ||
        static_cast<Eigen::Index>(mask.size()) != truths.size())
        throw DataError("confusion accumulate length mismatch");
    const int k = num_classes();
    for (Eigen::Index i = 0; i < truths.size(); ++i) {
        if (!mask[i]) continue;
        if (truths[i] < 0 || truths[i] >= k || predictions[i] < 0 || predictions[i] >= k)
            throw DataError("class index out of range in confusion accumulate");
        ++counts_(truths[i], predictions[i]);
    }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
    if (other.num_classes() != num_classes()) throw DataError("confusion matrix size mismatch");
    counts_ += other.counts_;
    return *this;
}

IouResult iou_from_matrix(const ConfusionMatrix& m) {
    const int k = m.num_classes();
    IouResult r;
    r.per_class.setConstant(k, std::numeric_limits<double>::quiet_NaN());
    r.valid.assign(k, 0);

    double sum = 0.0;
    int n_valid = 0;
    for (int c = 0; c < k; ++c) {
        std::int64_t row = 0, col = 0;
        for (int j = 0; j < k; ++j) {
            row += m.at(c, j);
            col += m.at(j, c);
        }
        const std::int64_t denom = row + col - m.at(c, c);
        if (denom == 0) continue;
        r.per_class[c] = static_cast<double>(m.at(c, c)) / static_cast<double>(denom);
        r.valid[c] = 1;
        sum += r.per_class[c];
        ++n_valid;
    }
    r.miou = n_valid > 0 ? sum / n_valid : 0.0;
    return r;
}

PseudoLabelQuality retention_and_accuracy(const Mask& eligible, const Mask& retained,
                                          const Eigen::VectorXi& pseudo_labels,
                                          const Eigen::VectorXi& truths) {
    if (eligible.size() != retained.size() ||
        static_cast<Eigen::Index>(retained.size()) != pseudo_labels.size() ||
        pseudo_labels.size() != truths.size())
        throw DataError("retention/accuracy length mismatch");

    PseudoLabelQuality q;
    for (std::size_t i = 0; i < eligible.size(); ++i) {
        if (!eligible[i]) continue;
        ++q.n_eligible;
        if (!retained[i]) continue;
        ++q.n_retained;
        if (pseudo_labels[static_cast<Eigen::Index>(i)] == truths[static_cast<Eigen::Index>(i)])
            ++q.n_correct;
    }
    q.retention = q.n_eligible > 0 ? static_cast<double>(q.n_retained) / q.n_eligible : 0.0;
    if (q.n_retained > 0) q.accuracy = static_cast<double>(q.n_correct) / q.n_retained;
    return q;
}

std::optional<double> certainty_of_incorrect(const Eigen::MatrixXd& probs,
                                             const Eigen::VectorXi& predictions,
                                             const Eigen::VectorXi& truths, const Mask& mask) {
    if (probs.rows() != predictions.size() || predictions.size() != truths.size() ||
        static_cast<Eigen::Index>(mask.size()) != truths.size())
        throw DataError("certainty length mismatch");

    double acc = 0.0;
    std::int64_t n = 0;
    for (Eigen::Index i = 0; i < predictions.size(); ++i) {
        if (!mask[i] || predictions[i] == truths[i]) continue;
        acc += uniform_nll(probs.row(i).transpose());
        ++n;
    }
    if (n == 0) return std::nullopt;
    return acc / static_cast<double>(n);
}

Eigen::VectorXi DiagnosticAccess::truths(std::size_t scene, const std::vector<std::int32_t>& pick,
                                         Eigen::Index rows) const {
    if (scene >= sealed_->store_.size()) throw DataError("sealed scene index out of range");
    const std::vector<std::uint8_t>& raw = sealed_->store_[scene];

    Eigen::VectorXi t(rows);
    if (pick.empty()) {
        if (static_cast<Eigen::Index>(raw.size()) != rows)
            throw DataError("sealed truth length mismatch");
        for (Eigen::Index i = 0; i < rows; ++i) t[i] = raw[i];
        return t;
    }
    if (static_cast<Eigen::Index>(pick.size()) != rows)
        throw DataError("pick table length mismatch");
    for (Eigen::Index i = 0; i < rows; ++i) {
        if (pick[i] < 0) {
            t[i] = -2;
            continue;
        }
        if (static_cast<std::size_t>(pick[i]) >= raw.size())
            throw DataError("pick row out of range");
        t[i] = raw[pick[i]];
    }
    return t;
}

PseudoLabelQuality DiagnosticAccess::pseudo_quality(std::size_t scene,
                                                    const std::vector<std::int32_t>& pick,
                                                    const Mask& eligible, const Mask& retained,
                                                    const Eigen::VectorXi& pseudo_labels) const {
    const Eigen::VectorXi t =
        truths(scene, pick, static_cast<Eigen::Index>(eligible.size()));
    return retention_and_accuracy(eligible, retained, pseudo_labels, t);
}

std::optional<double> DiagnosticAccess::certainty(std::size_t scene,
                                                  const std::vector<std::int32_t>& pick,
                                                  const Eigen::MatrixXd& probs,
                                                  const Eigen::VectorXi& predictions,
                                                  const Mask& candidates) const {
    Eigen::VectorXi t = truths(scene, pick, probs.rows());
    Mask usable = candidates;
    for (Eigen::Index i = 0; i < t.size(); ++i)
        if (t[i] < 0) usable[i] = 0;
    return certainty_of_incorrect(probs, predictions, t, usable);
}

void write_iou_csv(const std::filesystem::path& path, const std::vector<IouCsvRow>& rows,
                   const std::vector<std::string>& class_names) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "epoch,student";
    for (const auto& name : class_names) os << ",iou_" << name;
    os << ",miou\n";
    char buf[32];
    for (const IouCsvRow& r : rows) {
        os << r.epoch << ',';
        if (r.student < 0)
            os << "ensemble";
        else
            os << r.student;
        for (Eigen::Index c = 0; c < r.per_class.size(); ++c) {
            if (std::isnan(r.per_class[c])) {
                os << ",";
            } else {
                std::snprintf(buf, sizeof(buf), "%.6f", r.per_class[c]);
                os << ',' << buf;
            }
        }
        std::snprintf(buf, sizeof(buf), "%.6f", r.miou);
        os << ',' << buf << '\n';
    }
    if (!os) throw IoError("write failed for " + path.string());
}

}  // namespace collis
