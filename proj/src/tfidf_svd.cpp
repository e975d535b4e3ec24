#include "catseq/tfidf_svd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "catseq/error.hpp"
#include "catseq/nn/params.hpp"

namespace catseq {

double IdfTable::max_true_word_idf() const {
  double best = 0.0;
  for (std::size_t i = 1; i < idf.size(); ++i) {
    if (doc_freq[i] > 0) {
      best = std::max(best, idf[i]);
    }
  }
  return best;
}

IdfTable compute_idf(const TokenizedCorpus& corpus) {
  if (corpus.size() == 0) {
    fail(ErrorKind::kInvalidArgument, "cannot compute IDF of an empty corpus");
  }
  const std::size_t m = corpus.vocabulary().size();
  IdfTable table;
  table.n_sentences = corpus.size();
  table.doc_freq.assign(m + 1, 0);
  table.idf.assign(m + 1, 0.0);
  for (const auto& sentence : corpus.sentences()) {
    // One word per sensor and disjoint vocabularies: no word repeats in a sentence.
    for (WordId id : sentence.words) {
      ++table.doc_freq[id];
    }
  }
  const double n = static_cast<double>(table.n_sentences);
  for (std::size_t i = 1; i <= m; ++i) {
    table.idf[i] = std::log((n + 2.0) / (static_cast<double>(table.doc_freq[i]) + 1.0));
  }
  return table;
}

Eigen::MatrixXd TermDocumentMatrix::to_dense() const {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows),
                                            static_cast<Eigen::Index>(cols));
  for (std::size_t j = 0; j < cols; ++j) {
    for (const auto& [r, v] : columns[j]) {
      w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) += v;
    }
  }
  return w;
}

double TermDocumentMatrix::max_entry() const {
  double best = 0.0;
  for (const auto& col : columns) {
    for (const auto& entry : col) {
      best = std::max(best, entry.second);
    }
  }
  return best;
}

TermDocumentMatrix build_term_document_matrix(const TokenizedCorpus& corpus,
                                              const IdfTable& idf) {
  const std::size_t m = corpus.vocabulary().size();
  if (idf.idf.size() != m + 1 || idf.n_sentences != corpus.size()) {
    fail(ErrorKind::kInvalidArgument, "inconsistent inputs: IDF table does not match corpus");
  }
  TermDocumentMatrix w;
  w.rows = m;
  w.cols = corpus.size();
  w.columns.reserve(w.cols);
  for (const auto& sentence : corpus.sentences()) {
    TermDocumentMatrix::Column col;
    col.reserve(sentence.words.size());
    for (WordId id : sentence.words) {
      if (id == kMaskId || id > m) {
        fail(ErrorKind::kInvalidArgument, "inconsistent inputs: word index out of range");
      }
      col.emplace_back(id - 1, idf.idf[id]);
    }
    std::sort(col.begin(), col.end());
    w.columns.push_back(std::move(col));
  }
  return w;
}

SvdResult decompose(const Eigen::MatrixXd& w) {
  if (w.rows() == 0 || w.cols() == 0) {
    fail(ErrorKind::kInvalidArgument, "cannot decompose an empty matrix");
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(w, Eigen::ComputeThinU);
  if (svd.info() != Eigen::Success) {
    fail(ErrorKind::kNumeric, "decomposition failed");
  }
  SvdResult out;
  out.u = svd.matrixU();
  out.sigma = svd.singularValues();
  const double tol = static_cast<double>(std::max(w.rows(), w.cols())) *
                     std::numeric_limits<double>::epsilon() *
                     (out.sigma.size() > 0 ? out.sigma(0) : 0.0);
  out.rank = 0;
  for (Eigen::Index i = 0; i < out.sigma.size(); ++i) {
    if (out.sigma(i) > tol) {
      ++out.rank;
    }
  }
  return out;
}

SvdProjector::SvdProjector(Eigen::MatrixXd u, Eigen::VectorXd sigma)
    : u_(std::move(u)), sigma_(std::move(sigma)) {
  if (u_.cols() != sigma_.size()) {
    fail(ErrorKind::kInvalidArgument, "projector basis and singular values disagree");
  }
}

Eigen::VectorXd SvdProjector::project(const Eigen::VectorXd& x) const {
  if (x.size() != u_.rows()) {
    fail(ErrorKind::kInvalidArgument, "vector length mismatch");
  }
  const Eigen::VectorXd coords = u_.transpose() * x;
  return u_ * coords;
}

SvdProjector truncate(const SvdResult& svd, std::size_t k) {
  if (k == 0) {
    fail(ErrorKind::kInvalidArgument, "k must be at least 1");
  }
  if (k > svd.rank) {
    fail(ErrorKind::kInvalidArgument,
         "k exceeds rank: k=" + std::to_string(k) + ", rank=" + std::to_string(svd.rank));
  }
  const auto kk = static_cast<Eigen::Index>(k);
  return SvdProjector(svd.u.leftCols(kk), svd.sigma.head(kk));
}

SvdProjector fit_svd(const Eigen::MatrixXd& w, std::size_t k) { return truncate(decompose(w), k); }

std::size_t choose_k(const Eigen::VectorXd& sigma, double energy) {
  if (sigma.size() == 0) {
    fail(ErrorKind::kInvalidArgument, "no singular values");
  }
  if (!(energy > 0.0 && energy <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "energy must lie in (0, 1]");
  }
  const double total = sigma.squaredNorm();
  if (total <= 0.0) {
    return 1;
  }
  std::size_t nonzero = 0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (sigma(i) > 0.0) ++nonzero;
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    acc += sigma(i) * sigma(i);
    // Relative slack keeps energy = 1 from failing on the last rounding bit.
    if (acc >= energy * total * (1.0 - 1e-12)) {
      return std::min(static_cast<std::size_t>(i) + 1, std::max<std::size_t>(nonzero, 1));
    }
  }
  return std::max<std::size_t>(nonzero, 1);
}

Eigen::VectorXd SentenceVector::to_dense() const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dimension));
  for (const auto& [r, v] : entries) {
    x(static_cast<Eigen::Index>(r)) += v;
  }
  return x;
}

SentenceVector vectorize_sentence(const Sentence& sentence, const Vocabulary& vocabulary,
                                  const IdfTable& idf, double unknown_override) {
  SentenceVector x;
  x.dimension = vocabulary.size();
  x.entries.reserve(sentence.words.size());
  for (WordId id : sentence.words) {
    const Word& w = vocabulary.word(id);
    const double value = w.kind == WordKind::kTrueWord ? idf.idf.at(id) : unknown_override;
    x.entries.emplace_back(id - 1, value);
  }
  std::sort(x.entries.begin(), x.entries.end());
  return x;
}

ProjectionScore svd_anomaly_score(const SvdProjector& projector, const Eigen::VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != projector.dimension()) {
    fail(ErrorKind::kInvalidArgument, "vector length mismatch");
  }
  ProjectionScore out;
  const Eigen::VectorXd residual = projector.project(x) - x;
  out.contributions = residual.array().square();
  out.score = out.contributions.sum();
  return out;
}

ProjectionScore svd_anomaly_score(const SvdProjector& projector, const SentenceVector& x) {
  if (x.dimension != projector.dimension()) {
    fail(ErrorKind::kInvalidArgument, "vector length mismatch");
  }
  // U^T x touches only the nonzero rows of x.
  const auto& u = projector.u();
  Eigen::VectorXd coords = Eigen::VectorXd::Zero(u.cols());
  for (const auto& [r, v] : x.entries) {
    coords += v * u.row(static_cast<Eigen::Index>(r)).transpose();
  }
  Eigen::VectorXd residual = u * coords;
  for (const auto& [r, v] : x.entries) {
    residual(static_cast<Eigen::Index>(r)) -= v;
  }
  ProjectionScore out;
  out.contributions = residual.array().square();
  out.score = out.contributions.sum();
  return out;
}

std::vector<double> sensor_contributions(const Vocabulary& vocabulary,
                                         const Eigen::VectorXd& contributions) {
  if (static_cast<std::size_t>(contributions.size()) != vocabulary.size()) {
    fail(ErrorKind::kInvalidArgument, "vector length mismatch");
  }
  std::vector<double> out(vocabulary.sensor_count(), 0.0);
  for (std::size_t s = 0; s < out.size(); ++s) {
    const IndexRange range = vocabulary.slice(s);
    for (WordId id = range.begin; id < range.end; ++id) {
      out[s] += contributions(static_cast<Eigen::Index>(id - 1));
    }
  }
  return out;
}

SvdModel::Scored SvdModel::score(const TokenizedCorpus& corpus, std::size_t sentence_index) const {
  const auto x =
      vectorize_sentence(corpus.sentence(sentence_index), corpus.vocabulary(), idf, unknown_override);
  const auto scored = svd_anomaly_score(projector, x);
  Scored out;
  out.sensor_scores = sensor_contributions(corpus.vocabulary(), scored.contributions);
  // The sensor slices partition the rows, so re-summing per sensor keeps the
  // score equal to the sum of what is reported per sensor.
  for (double v : out.sensor_scores) {
    out.score += v;
  }
  return out;
}

SvdModel fit_svd_model(const TokenizedCorpus& corpus, const SvdFitOptions& options) {
  SvdModel model;
  model.energy = options.energy;
  model.idf = compute_idf(corpus);
  const auto w = build_term_document_matrix(corpus, model.idf);
  const auto svd = decompose(w.to_dense());
  if (svd.rank == 0) {
    fail(ErrorKind::kNumeric, "term-document matrix has rank 0");
  }
  std::size_t k = options.k;
  if (k == 0) {
    k = choose_k(svd.sigma.head(static_cast<Eigen::Index>(svd.rank)), options.energy);
  }
  model.projector = truncate(svd, k);
  model.unknown_override = options.unknown_factor * w.max_entry();
  return model;
}

void save_svd_model(const SvdModel& model, std::uint64_t vocabulary_fingerprint,
                    const std::filesystem::path& stem) {
  const auto& u = model.projector.u();
  const auto m = static_cast<std::size_t>(u.rows());
  const auto k = static_cast<std::size_t>(u.cols());
  nn::Tensor ut({m, k});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      ut.at(i, j) = u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  nn::Tensor sigma({k});
  for (std::size_t j = 0; j < k; ++j) {
    sigma[j] = model.projector.sigma()(static_cast<Eigen::Index>(j));
  }
  nn::Tensor idf({model.idf.idf.size()}, model.idf.idf);
  std::vector<double> df(model.idf.doc_freq.begin(), model.idf.doc_freq.end());
  nn::Tensor doc_freq({df.size()}, df);

  nlohmann::json header;
  header["kind"] = "svd_projector";
  header["m"] = m;
  header["k"] = k;
  header["n_sentences"] = model.idf.n_sentences;
  header["unknown_override"] = model.unknown_override;
  header["energy"] = model.energy;
  header["vocabulary_hash"] = vocabulary_fingerprint;
  nn::save_tensors(stem,
                   {{"U", std::move(ut)},
                    {"sigma", std::move(sigma)},
                    {"idf", std::move(idf)},
                    {"doc_freq", std::move(doc_freq)}},
                   header);
}

SvdModel load_svd_model(const std::filesystem::path& stem, std::uint64_t vocabulary_fingerprint) {
  const auto file = nn::load_tensors(stem);
  const auto& h = file.header;
  if (h.value("kind", "") != "svd_projector") {
    fail(ErrorKind::kParse, "not an SVD projector file: " + stem.string());
  }
  if (h.at("vocabulary_hash").get<std::uint64_t>() != vocabulary_fingerprint) {
    fail(ErrorKind::kSchema, "schema mismatch: projector was fit on a different vocabulary");
  }
  const auto& ut = file.get("U");
  const auto& st = file.get("sigma");
  Eigen::MatrixXd u(static_cast<Eigen::Index>(ut.shape()[0]),
                    static_cast<Eigen::Index>(ut.shape()[1]));
  for (std::size_t i = 0; i < ut.shape()[0]; ++i) {
    for (std::size_t j = 0; j < ut.shape()[1]; ++j) {
      u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ut.at(i, j);
    }
  }
  Eigen::VectorXd sigma(static_cast<Eigen::Index>(st.size()));
  for (std::size_t j = 0; j < st.size(); ++j) {
    sigma(static_cast<Eigen::Index>(j)) = st[j];
  }
  SvdModel model;
  model.projector = SvdProjector(std::move(u), std::move(sigma));
  model.unknown_override = h.at("unknown_override").get<double>();
  model.energy = h.at("energy").get<double>();
  model.idf.n_sentences = h.at("n_sentences").get<std::size_t>();
  const auto& idf = file.get("idf");
  model.idf.idf.assign(idf.values().begin(), idf.values().end());
  const auto& df = file.get("doc_freq");
  for (double v : df.values()) {
    model.idf.doc_freq.push_back(static_cast<std::size_t>(v));
  }
  return model;
}

}  // namespace catseq
