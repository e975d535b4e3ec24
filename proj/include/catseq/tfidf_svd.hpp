#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "catseq/tokenization.hpp"

namespace catseq {

/// Smoothed inverse document frequencies, indexed by WordId (entry 0 unused).
struct IdfTable {
  std::size_t n_sentences = 0;
  std::vector<std::size_t> doc_freq;
  std::vector<double> idf;

  double max_true_word_idf() const;
};

IdfTable compute_idf(const TokenizedCorpus& corpus);

/// Sparse column form of the words x sentences TF-IDF matrix.
/// Row r corresponds to WordId r + 1.
struct TermDocumentMatrix {
  using Column = std::vector<std::pair<std::size_t, double>>;

  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Column> columns;

  Eigen::MatrixXd to_dense() const;
  double max_entry() const;
};

TermDocumentMatrix build_term_document_matrix(const TokenizedCorpus& corpus, const IdfTable& idf);

/// Full thin SVD: left singular vectors and all singular values.
struct SvdResult {
  Eigen::MatrixXd u;
  Eigen::VectorXd sigma;
  std::size_t rank = 0;
};

SvdResult decompose(const Eigen::MatrixXd& w);

/// Orthogonal projection P(x) = U U^T x onto the leading k left singular
/// vectors of the training matrix.
class SvdProjector {
 public:
  SvdProjector() = default;
  SvdProjector(Eigen::MatrixXd u, Eigen::VectorXd sigma);

  std::size_t dimension() const noexcept { return static_cast<std::size_t>(u_.rows()); }
  std::size_t k() const noexcept { return static_cast<std::size_t>(u_.cols()); }
  const Eigen::MatrixXd& u() const noexcept { return u_; }
  const Eigen::VectorXd& sigma() const noexcept { return sigma_; }

  Eigen::VectorXd project(const Eigen::VectorXd& x) const;

 private:
  Eigen::MatrixXd u_;
  Eigen::VectorXd sigma_;
};

/// Truncates a decomposition to rank k. Throws if k is 0 or exceeds the rank.
SvdProjector truncate(const SvdResult& svd, std::size_t k);
SvdProjector fit_svd(const Eigen::MatrixXd& w, std::size_t k);

/// Smallest k whose leading squared singular values hold `energy` of the total.
std::size_t choose_k(const Eigen::VectorXd& sigma, double energy = 0.90);

struct SentenceVector {
  std::size_t dimension = 0;
  std::vector<std::pair<std::size_t, double>> entries;  // (row, value)

  Eigen::VectorXd to_dense() const;
};

SentenceVector vectorize_sentence(const Sentence& sentence, const Vocabulary& vocabulary,
                                  const IdfTable& idf, double unknown_override);

struct ProjectionScore {
  double score = 0.0;
  Eigen::VectorXd contributions;  // squared residual per row
};

ProjectionScore svd_anomaly_score(const SvdProjector& projector, const SentenceVector& x);
ProjectionScore svd_anomaly_score(const SvdProjector& projector, const Eigen::VectorXd& x);

/// Sums row contributions over each sensor's vocabulary slice.
std::vector<double> sensor_contributions(const Vocabulary& vocabulary,
                                         const Eigen::VectorXd& contributions);

/// Everything needed to score new sentences with the projection model.
struct SvdModel {
  IdfTable idf;
  SvdProjector projector;
  double unknown_override = 0.0;
  double energy = 0.90;

  struct Scored {
    double score = 0.0;
    std::vector<double> sensor_scores;
  };
  Scored score(const TokenizedCorpus& corpus, std::size_t sentence_index) const;
};

struct SvdFitOptions {
  double energy = 0.90;
  std::size_t k = 0;  // 0 selects k from energy
  double unknown_factor = 2.0;
};

SvdModel fit_svd_model(const TokenizedCorpus& corpus, const SvdFitOptions& options = {});

void save_svd_model(const SvdModel& model, std::uint64_t vocabulary_fingerprint,
                    const std::filesystem::path& stem);
SvdModel load_svd_model(const std::filesystem::path& stem, std::uint64_t vocabulary_fingerprint);

}  // namespace catseq
