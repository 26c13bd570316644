#include "collis/student.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "collis/rng.hpp"

namespace collis {

void StudentConfig::validate() const {
    if (hidden < 1) throw ConfigError("student hidden width must be positive");
    if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
    repr.validate();
}

ParamGrads& ParamGrads::operator+=(const ParamGrads& other) {
    w1 += other.w1;
    b1 += other.b1;
    w2 += other.w2;
    b2 += other.b2;
    return *this;
}

bool ParamGrads::all_finite() const {
    return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
}

namespace {

void fill_uniform(Eigen::Ref<Eigen::MatrixXd> m, double scale, RngStream& rng) {
    // Row-major fill order, fixed for reproducibility.
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.next_double(-scale, scale);
}

}  // namespace

Student::Student(const StudentConfig& config, int num_classes, std::uint64_t master_seed)
    : config_(config), num_classes_(num_classes) {
    config_.validate();
    if (num_classes_ < 2) throw ConfigError("student needs at least 2 classes");

    const int f = kFeatureDim;
    const int h = config_.hidden;
    const int k = num_classes_;
    w1_.resize(f, h);
    b1_.resize(h);
    w2_.resize(h, k);
    b2_.resize(k);

    RngStream rng = derive_stream(master_seed, "init", static_cast<std::uint64_t>(config_.id));
    const double s1 = std::sqrt(1.0 / f);
    const double s2 = std::sqrt(1.0 / h);
    fill_uniform(w1_, s1, rng);
    fill_uniform(b1_, s1, rng);
    fill_uniform(w2_, s2, rng);
    fill_uniform(b2_, s2, rng);

    vel_w1_ = Eigen::MatrixXd::Zero(f, h);
    vel_b1_ = Eigen::RowVectorXd::Zero(h);
    vel_w2_ = Eigen::MatrixXd::Zero(h, k);
    vel_b2_ = Eigen::RowVectorXd::Zero(k);
}

namespace {

// Fixed per-channel scales keeping the tanh layer in its active range:
// (x, y, z, intensity, depth) + (mean x, mean y, mean z, mean intensity,
// log-count, winner depth).
constexpr double kFeatureScale[kFeatureDim] = {1.0 / 40, 1.0 / 40, 1.0 / 8, 1.0, 1.0 / 40,
                                               1.0 / 40, 1.0 / 40, 1.0 / 8, 1.0, 1.0 / 3,
                                               1.0 / 40};

}  // namespace

StudentFeatures Student::assemble_features(const PointCloud& cloud) const {
    if (cloud.empty()) throw DataError("cannot run a student on an empty cloud");

    StudentFeatures feat;
    feat.mapping = project(cloud, config_.repr);
    const Eigen::MatrixXd cells = grid_features(cloud, feat.mapping);

    const auto m = static_cast<Eigen::Index>(cloud.size());
    feat.x.resize(m, kFeatureDim);
    for (Eigen::Index i = 0; i < m; ++i) {
        const Point& p = cloud.points[i];
        feat.x(i, 0) = p.x;
        feat.x(i, 1) = p.y;
        feat.x(i, 2) = p.z;
        feat.x(i, 3) = p.intensity;
        feat.x(i, 4) = std::sqrt(double(p.x) * p.x + double(p.y) * p.y + double(p.z) * p.z);
        const std::int32_t c = feat.mapping.point_to_cell[i];
        if (c >= 0)
            feat.x.row(i).tail<kCellFeatureCount>() = cells.row(c);
        else
            feat.x.row(i).tail<kCellFeatureCount>().setZero();
    }
    for (int f = 0; f < kFeatureDim; ++f) feat.x.col(f) *= kFeatureScale[f];
    return feat;
}

StudentOutput Student::forward(const StudentFeatures& features, ForwardTrace* trace) const {
    const Eigen::MatrixXd hidden =
        ((features.x * w1_).rowwise() + b1_).array().tanh().matrix();
    StudentOutput out;
    out.logits = (hidden * w2_).rowwise() + b2_;

    // Row-stable softmax.
    out.probs.resize(out.logits.rows(), out.logits.cols());
    out.predictions.resize(out.logits.rows());
    out.confidence.resize(out.logits.rows());
    for (Eigen::Index i = 0; i < out.logits.rows(); ++i) {
        const double mx = out.logits.row(i).maxCoeff();
        Eigen::RowVectorXd e = (out.logits.row(i).array() - mx).exp();
        out.probs.row(i) = e / e.sum();
        Eigen::Index arg = 0;
        out.confidence[i] = out.probs.row(i).maxCoeff(&arg);
        out.predictions[i] = static_cast<int>(arg);
    }
    if (trace) trace->hidden = hidden;
    return out;
}

StudentOutput Student::forward(const PointCloud& cloud) const {
    return forward(assemble_features(cloud));
}

ParamGrads Student::backward(const StudentFeatures& features, const ForwardTrace& trace,
                             const Eigen::MatrixXd& grad_logits) const {
    if (grad_logits.rows() != features.x.rows() || grad_logits.cols() != num_classes_)
        throw DataError("upstream gradient shape mismatch");

    ParamGrads g;
    g.w2 = trace.hidden.transpose() * grad_logits;
    g.b2 = grad_logits.colwise().sum();
    const Eigen::MatrixXd d_hidden =
        ((grad_logits * w2_.transpose()).array() * (1.0 - trace.hidden.array().square()))
            .matrix();
    g.w1 = features.x.transpose() * d_hidden;
    g.b1 = d_hidden.colwise().sum();
    return g;
}

void Student::step(const ParamGrads& grads) {
    if (!grads.all_finite())
        throw DataError("non-finite gradient in student " + std::to_string(config_.id));

    constexpr double momentum = 0.9;
    vel_w1_ = momentum * vel_w1_ + grads.w1;
    vel_b1_ = momentum * vel_b1_ + grads.b1;
    vel_w2_ = momentum * vel_w2_ + grads.w2;
    vel_b2_ = momentum * vel_b2_ + grads.b2;
    w1_ -= config_.learning_rate * vel_w1_;
    b1_ -= config_.learning_rate * vel_b1_;
    w2_ -= config_.learning_rate * vel_w2_;
    b2_ -= config_.learning_rate * vel_b2_;

    if (!(w1_.allFinite() && b1_.allFinite() && w2_.allFinite() && b2_.allFinite()))
        throw DataError("non-finite parameters after update in student " +
                        std::to_string(config_.id));
}

void Student::set_parameters(const Eigen::MatrixXd& w1, const Eigen::RowVectorXd& b1,
                             const Eigen::MatrixXd& w2, const Eigen::RowVectorXd& b2) {
    if (w1.rows() != w1_.rows() || w1.cols() != w1_.cols() || b1.size() != b1_.size() ||
        w2.rows() != w2_.rows() || w2.cols() != w2_.cols() || b2.size() != b2_.size())
        throw DataError("parameter shape mismatch");
    w1_ = w1;
    b1_ = b1;
    w2_ = w2;
    b2_ = b2;
    vel_w1_.setZero();
    vel_b1_.setZero();
    vel_w2_.setZero();
    vel_b2_.setZero();
}

namespace {

void write_matrix_rowmajor(std::ostream& os, const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const double v = m(r, c);
            os.write(reinterpret_cast<const char*>(&v), sizeof(double));
        }
}

void read_matrix_rowmajor(std::istream& is, Eigen::Ref<Eigen::MatrixXd> m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            double v;
            is.read(reinterpret_cast<char*>(&v), sizeof(double));
            if (!is) throw IoError("truncated checkpoint");
            m(r, c) = v;
        }
}

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw IoError("truncated checkpoint header");
    return v;
}

}  // namespace

void Student::save_checkpoint(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write("CKPT", 4);
    const std::uint32_t header[4] = {static_cast<std::uint32_t>(config_.id),
                                     static_cast<std::uint32_t>(kFeatureDim),
                                     static_cast<std::uint32_t>(config_.hidden),
                                     static_cast<std::uint32_t>(num_classes_)};
    os.write(reinterpret_cast<const char*>(header), sizeof(header));
    write_matrix_rowmajor(os, w1_);
    write_matrix_rowmajor(os, b1_);
    write_matrix_rowmajor(os, w2_);
    write_matrix_rowmajor(os, b2_);
    if (!os) throw IoError("write failed for " + path.string());
}

void Student::load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "CKPT", 4) != 0)
        throw IoError("bad magic in " + path.string());
    const std::uint32_t id = read_u32(is);
    const std::uint32_t f = read_u32(is);
    const std::uint32_t h = read_u32(is);
    const std::uint32_t k = read_u32(is);
    if (id != static_cast<std::uint32_t>(config_.id))
        throw IoError("checkpoint student id mismatch");
    if (f != kFeatureDim || h != static_cast<std::uint32_t>(config_.hidden) ||
        k != static_cast<std::uint32_t>(num_classes_))
        throw IoError("checkpoint dimensions mismatch");
    read_matrix_rowmajor(is, w1_);
    Eigen::MatrixXd b1m(1, b1_.size()), b2m(1, b2_.size());
    read_matrix_rowmajor(is, b1m);
    read_matrix_rowmajor(is, w2_);
    read_matrix_rowmajor(is, b2m);
    b1_ = b1m.row(0);
    b2_ = b2m.row(0);
}

}  // namespace collis
