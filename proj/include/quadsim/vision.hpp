// PCA (eigenfaces) training, subspace encoding, and Mahalanobis-distance
// classification with unknown rejection, plus the model file and portable
// graymap I/O used by the CLI.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace quadsim {

inline constexpr int kFaceSide = 128;
inline constexpr int kFacePixels = kFaceSide * kFaceSide;

struct ClassEmbedding {
    std::string label;
    Eigen::VectorXd z;
};

/// Trained recognizer: sample mean, orthonormal basis (columns), per-class
/// embeddings, shared regularized within-class covariance, and the
/// Mahalanobis rejection threshold. basis_variances carries the per-column
/// data variances (descending); it is derived at training time and not part
/// of the model file.
struct FaceModel {
    Eigen::VectorXd mean;
    Eigen::MatrixXd basis;  // n x k, orthonormal columns
    std::vector<ClassEmbedding> classes;
    Eigen::MatrixXd metric;  // k x k SPD
    double reject_threshold = 3.0;
    Eigen::VectorXd basis_variances;
};

/// Snapshot-method PCA: eigendecompose the M x M Gram matrix of the centered
/// images instead of the n x n covariance (training counts are far below the
/// pixel count). Class embeddings are per-class means of the encoded training
/// images; the metric is the pooled within-class covariance of the encodings
/// plus lambda I with lambda = 1e-3 trace/k (floored when the scatter is
/// degenerate).
inline FaceModel train_pca(const std::vector<Eigen::VectorXd> &images,
                           const std::vector<std::string> &labels, int k,
                           double reject_threshold = 3.0) {
    const int m = static_cast<int>(images.size());
    if (m < 2) throw std::invalid_argument("train_pca: need at least 2 images");
    if (labels.size() != images.size()) {
        throw std::invalid_argument("train_pca: image/label count mismatch");
    }
    const auto n = images[0].size();
    for (const auto &img : images) {
        if (img.size() != n) throw std::invalid_argument("train_pca: image size mismatch");
    }
    if (k < 1 || k > m - 1) {
        throw std::invalid_argument("train_pca: k must be in [1, image count - 1]");
    }

    // First-appearance class ordering keeps indices deterministic.
    std::vector<std::string> class_order;
    std::map<std::string, int> class_index;
    for (const auto &label : labels) {
        if (class_index.emplace(label, static_cast<int>(class_order.size())).second) {
            class_order.push_back(label);
        }
    }
    if (class_order.size() < 2) {
        throw std::invalid_argument("train_pca: need at least 2 distinct labels");
    }

    Eigen::MatrixXd x(n, m);
    for (int i = 0; i < m; ++i) x.col(i) = images[static_cast<size_t>(i)];
    FaceModel model;
    model.mean = x.rowwise().mean();
    Eigen::MatrixXd centered = x.colwise() - model.mean;

    const Eigen::MatrixXd gram = centered.transpose() * centered;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success) throw std::runtime_error("train_pca: eigensolve failed");

    // Eigenvalues come back ascending; take the top k and insist they carry
    // actual variance (k beyond the data rank is rejected).
    const Eigen::VectorXd evals = eig.eigenvalues();
    const double rank_floor = std::max(evals.maxCoeff(), 0.0) * 1e-10;
    model.basis.resize(n, k);
    model.basis_variances.resize(k);
    for (int j = 0; j < k; ++j) {
        const int src = m - 1 - j;
        const double lambda = evals[src];
        if (!(lambda > rank_floor)) {
            throw std::invalid_argument("train_pca: k exceeds the rank of the centered data");
        }
        model.basis.col(j) = centered * eig.eigenvectors().col(src) / std::sqrt(lambda);
        model.basis_variances[j] = lambda / (m - 1);
    }

    // Encode the training set and pool the within-class scatter.
    Eigen::MatrixXd encodings = model.basis.transpose() * centered;  // k x m
    const int c = static_cast<int>(class_order.size());
    std::vector<int> counts(static_cast<size_t>(c), 0);
    Eigen::MatrixXd class_means = Eigen::MatrixXd::Zero(k, c);
    for (int i = 0; i < m; ++i) {
        const int ci = class_index[labels[static_cast<size_t>(i)]];
        class_means.col(ci) += encodings.col(i);
        counts[static_cast<size_t>(ci)] += 1;
    }
    for (int ci = 0; ci < c; ++ci) class_means.col(ci) /= counts[static_cast<size_t>(ci)];

    Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i < m; ++i) {
        const int ci = class_index[labels[static_cast<size_t>(i)]];
        const Eigen::VectorXd d = encodings.col(i) - class_means.col(ci);
        scatter += d * d.transpose();
    }
    scatter /= std::max(1, m - c);

    double lambda_reg = 1e-3 * scatter.trace() / k;
    if (!(lambda_reg > 0.0)) lambda_reg = 1e-6;
    model.metric = scatter + lambda_reg * Eigen::MatrixXd::Identity(k, k);

    model.classes.reserve(static_cast<size_t>(c));
    for (int ci = 0; ci < c; ++ci) {
        model.classes.push_back({class_order[static_cast<size_t>(ci)], class_means.col(ci)});
    }
    model.reject_threshold = reject_threshold;
    return model;
}

/// z = U' (x - mean).
inline Eigen::VectorXd encode(const Eigen::VectorXd &image, const FaceModel &model) {
    if (image.size() != model.mean.size()) {
        throw std::invalid_argument("encode: image dimension mismatch");
    }
    return model.basis.transpose() * (image - model.mean);
}

struct Classification {
    std::string label;
    int class_index = -1;
    double distance = 0.0;
    bool unknown = false;
};

/// Presentation score used alongside the raw distance.
inline double similarity_score_pct(double distance) {
    return 100.0 * std::exp(-0.5 * distance * distance);
}

/// Mahalanobis argmin over class embeddings (ties to the lowest index);
/// distances above the model threshold report Unknown.
inline Classification classify(const Eigen::VectorXd &z, const FaceModel &model) {
    if (model.classes.empty()) throw std::invalid_argument("classify: model has no classes");
    Eigen::LDLT<Eigen::MatrixXd> solver(model.metric);
    Classification out;
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < model.classes.size(); ++i) {
        const Eigen::VectorXd d = z - model.classes[i].z;
        const double dist2 = d.dot(solver.solve(d));
        if (dist2 < best) {
            best = dist2;
            out.class_index = static_cast<int>(i);
        }
    }
    out.distance = std::sqrt(std::max(best, 0.0));
    if (out.distance > model.reject_threshold) {
        out.unknown = true;
        out.label = "Unknown";
    } else {
        out.label = model.classes[static_cast<size_t>(out.class_index)].label;
    }
    return out;
}

// =============================================================================
// Model file: magic "QSFACE1\n", u32 header (n, k, class count), then mean,
// basis (column-major), per-class label + embedding, metric (row-major), and
// the rejection threshold, all little-endian 64-bit floats.
// =============================================================================

namespace detail {

inline void write_u32(std::ostream &os, uint32_t v) {
    os.write(reinterpret_cast<const char *>(&v), sizeof(v));
}
inline uint32_t read_u32(std::istream &is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char *>(&v), sizeof(v));
    if (!is) throw std::runtime_error("face model: truncated header");
    return v;
}
inline void write_f64s(std::ostream &os, const double *data, size_t count) {
    os.write(reinterpret_cast<const char *>(data), static_cast<std::streamsize>(count * 8));
}
inline void read_f64s(std::istream &is, double *data, size_t count) {
    is.read(reinterpret_cast<char *>(data), static_cast<std::streamsize>(count * 8));
    if (!is) throw std::runtime_error("face model: truncated payload");
}

}  // namespace detail

inline void save_model(const FaceModel &model, std::ostream &os) {
    os.write("QSFACE1\n", 8);
    detail::write_u32(os, static_cast<uint32_t>(model.mean.size()));
    detail::write_u32(os, static_cast<uint32_t>(model.basis.cols()));
    detail::write_u32(os, static_cast<uint32_t>(model.classes.size()));
    detail::write_f64s(os, model.mean.data(), static_cast<size_t>(model.mean.size()));
    detail::write_f64s(os, model.basis.data(), static_cast<size_t>(model.basis.size()));
    for (const auto &cls : model.classes) {
        detail::write_u32(os, static_cast<uint32_t>(cls.label.size()));
        os.write(cls.label.data(), static_cast<std::streamsize>(cls.label.size()));
        detail::write_f64s(os, cls.z.data(), static_cast<size_t>(cls.z.size()));
    }
    Eigen::MatrixXd metric_rm = model.metric.transpose();  // row-major on disk
    detail::write_f64s(os, metric_rm.data(), static_cast<size_t>(metric_rm.size()));
    detail::write_f64s(os, &model.reject_threshold, 1);
}

inline FaceModel load_model(std::istream &is) {
    char magic[8] = {};
    is.read(magic, 8);
    if (!is || std::string(magic, 8) != "QSFACE1\n") {
        throw std::runtime_error("face model: bad magic");
    }
    const uint32_t n = detail::read_u32(is);
    const uint32_t k = detail::read_u32(is);
    const uint32_t c = detail::read_u32(is);
    if (n == 0 || k == 0 || c == 0 || k > n) throw std::runtime_error("face model: bad header");

    FaceModel model;
    model.mean.resize(n);
    detail::read_f64s(is, model.mean.data(), n);
    model.basis.resize(n, k);
    detail::read_f64s(is, model.basis.data(), static_cast<size_t>(n) * k);
    model.classes.resize(c);
    for (auto &cls : model.classes) {
        const uint32_t len = detail::read_u32(is);
        cls.label.resize(len);
        is.read(cls.label.data(), len);
        cls.z.resize(k);
        detail::read_f64s(is, cls.z.data(), k);
    }
    Eigen::MatrixXd metric_rm(k, k);
    detail::read_f64s(is, metric_rm.data(), static_cast<size_t>(k) * k);
    model.metric = metric_rm.transpose();
    detail::read_f64s(is, &model.reject_threshold, 1);
    return model;
}

// =============================================================================
// Portable graymap (P5 binary / P2 ascii), normalized to [0, 1].
// =============================================================================

struct GrayImage {
    int width = 0;
    int height = 0;
    Eigen::VectorXd pixels;  // row-major, [0, 1]
};

inline GrayImage load_pgm(std::istream &is) {
    std::string magic;
    is >> magic;
    if (magic != "P5" && magic != "P2") throw std::runtime_error("pgm: unsupported magic");
    auto next_token = [&is]() {
        std::string tok;
        while (is >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(is, rest);
                continue;
            }
            return tok;
        }
        throw std::runtime_error("pgm: truncated header");
    };
    const int w = std::stoi(next_token());
    const int h = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
        throw std::runtime_error("pgm: bad dimensions");
    }

    GrayImage img;
    img.width = w;
    img.height = h;
    img.pixels.resize(static_cast<long>(w) * h);
    const long count = static_cast<long>(w) * h;
    if (magic == "P2") {
        for (long i = 0; i < count; ++i) {
            long v;
            if (!(is >> v)) throw std::runtime_error("pgm: truncated pixel data");
            img.pixels[i] = static_cast<double>(v) / maxval;
        }
        return img;
    }
    is.get();  // single whitespace after maxval
    if (maxval < 256) {
        std::vector<uint8_t> raw(static_cast<size_t>(count));
        is.read(reinterpret_cast<char *>(raw.data()), count);
        if (!is) throw std::runtime_error("pgm: truncated pixel data");
        for (long i = 0; i < count; ++i) img.pixels[i] = raw[static_cast<size_t>(i)] / static_cast<double>(maxval);
    } else {
        std::vector<uint8_t> raw(static_cast<size_t>(count) * 2);
        is.read(reinterpret_cast<char *>(raw.data()), count * 2);
        if (!is) throw std::runtime_error("pgm: truncated pixel data");
        for (long i = 0; i < count; ++i) {
            const int v = (raw[static_cast<size_t>(2 * i)] << 8) | raw[static_cast<size_t>(2 * i + 1)];
            img.pixels[i] = static_cast<double>(v) / maxval;
        }
    }
    return img;
}

inline void save_pgm(const GrayImage &img, std::ostream &os) {
    os << "P5\n" << img.width << " " << img.height << "\n255\n";
    for (long i = 0; i < img.pixels.size(); ++i) {
        const double v = std::clamp(img.pixels[i], 0.0, 1.0);
        const uint8_t byte = static_cast<uint8_t>(std::lround(v * 255.0));
        os.write(reinterpret_cast<const char *>(&byte), 1);
    }
}

/// Load a face image, insisting on the pipeline's 128 x 128 layout.
inline Eigen::VectorXd load_face_pgm(const std::string &path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open image: " + path);
    GrayImage img = load_pgm(f);
    if (img.width != kFaceSide || img.height != kFaceSide) {
        throw std::runtime_error("face image must be 128x128: " + path);
    }
    return img.pixels;
}

}  // namespace quadsim
