#pragma once

#include <qaf/fusion/layers.hpp>

#include <utility>
#include <vector>

namespace qaf {

/// Per-sample network of the intra-modality block: an encoder producing the
/// sample representation Y_ki and a quality branch tapping one of the
/// encoder's hidden layers and ending in a sigmoid score q_ki.
class QNetA {
public:
    struct Output {
        Var features; // p x D
        Var scores;   // p, each in (0, 1)
    };

    QNetA() = default;

    /// `tap` is the 1-based hidden layer the quality branch diverges from.
    QNetA(const std::string& name, std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t embed_dim,
          std::size_t quality_hidden, std::size_t tap, Rng& rng)
        : tap_(tap)
    {
        if (hidden.empty() || tap < 1 || tap > hidden.size())
            throw ConfigError("qnet_a: quality tap " + std::to_string(tap) + " outside hidden layers");
        std::size_t in = input_dim;
        for (std::size_t i = 0; i < hidden.size(); ++i) {
            hidden_.emplace_back(name + "/hidden" + std::to_string(i), in, hidden[i], rng);
            in = hidden[i];
        }
        out_ = Dense(name + "/out", in, embed_dim, rng);
        quality_hidden_ = Dense(name + "/quality_hidden", hidden[tap - 1], quality_hidden, rng);
        quality_out_ = Dense(name + "/quality_out", quality_hidden, 1, rng);
    }

    std::size_t input_dim() const { return hidden_.front().in_features(); }
    std::size_t embed_dim() const { return out_.out_features(); }

    /// Batched forward over a (p x input_dim) matrix of samples.
    Output forward(const Var& samples, double fc_rate = 0.0, Rng* rng = nullptr) const
    {
        if (samples->value.rank() != 2 || samples->value.cols() != input_dim())
            throw ShapeError("qnet_a: sample shape " + shape_str(samples->shape()) + ", expected [p x " +
                             std::to_string(input_dim()) + "]");
        Var h = samples;
        Var tapped;
        for (std::size_t i = 0; i < hidden_.size(); ++i) {
            h = fc_dropout(relu(hidden_[i](h)), fc_rate, rng);
            if (i + 1 == tap_) tapped = h;
        }
        Var features = out_(h);
        Var q = sigmoid(quality_out_(relu(quality_hidden_(tapped))));
        return {features, reshape(q, Shape{samples->value.rows()})};
    }

    std::vector<const Dense*> layers() const
    {
        std::vector<const Dense*> out;
        for (const auto& l : hidden_) out.push_back(&l);
        out.push_back(&out_);
        out.push_back(&quality_hidden_);
        out.push_back(&quality_out_);
        return out;
    }

    Dense& quality_out() { return quality_out_; }
    std::vector<Dense>& hidden() { return hidden_; }
    Dense& out() { return out_; }

private:
    std::vector<Dense> hidden_;
    Dense out_;
    Dense quality_hidden_;
    Dense quality_out_;
    std::size_t tap_ = 1;
};

/// Inter-modality network: D -> D (ReLU) -> D main branch producing Z_k, and a
/// quality branch off the hidden layer producing the v-dimensional Q_k^b.
class QNetB {
public:
    struct Output {
        Var embedding; // D
        Var quality;   // v
    };

    QNetB() = default;

    QNetB(const std::string& name, std::size_t embed_dim, std::size_t quality_dim, Rng& rng)
        : first_(name + "/l1", embed_dim, embed_dim, rng),
          second_(name + "/l2", embed_dim, embed_dim, rng),
          quality_(name + "/quality", embed_dim, quality_dim, rng)
    {
    }

    Output forward(const Var& y, double fc_rate = 0.0, Rng* rng = nullptr) const
    {
        if (y->value.rank() != 1 || y->value.size() != first_.in_features())
            throw ShapeError("qnet_b: input shape " + shape_str(y->shape()) + ", expected [" +
                             std::to_string(first_.in_features()) + "]");
        Var h = fc_dropout(relu(first_(y)), fc_rate, rng);
        return {second_(h), relu(quality_(h))};
    }

    std::vector<const Dense*> layers() const { return {&first_, &second_, &quality_}; }

    Dense& first() { return first_; }
    Dense& second() { return second_; }

private:
    Dense first_;
    Dense second_;
    Dense quality_;
};

/// Fully-connected block mapping the concatenated quality vectors (v*K) to K
/// sigmoid inter-modality scores.
class FNetB {
public:
    FNetB() = default;

    FNetB(const std::string& name, std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t modalities,
          Rng& rng)
    {
        std::size_t in = input_dim;
        for (std::size_t i = 0; i < hidden.size(); ++i) {
            layers_.emplace_back(name + "/l" + std::to_string(i), in, hidden[i], rng);
            in = hidden[i];
        }
        layers_.emplace_back(name + "/out", in, modalities, rng);
    }

    std::size_t input_dim() const { return layers_.front().in_features(); }

    Var forward(const Var& q, double fc_rate = 0.0, Rng* rng = nullptr) const
    {
        if (q->value.rank() != 1 || q->value.size() != input_dim())
            throw ShapeError("fnet_b: input shape " + shape_str(q->shape()) + ", expected [" +
                             std::to_string(input_dim()) + "]");
        Var h = q;
        for (std::size_t i = 0; i + 1 < layers_.size(); ++i) h = fc_dropout(relu(layers_[i](h)), fc_rate, rng);
        return sigmoid(layers_.back()(h));
    }

    std::vector<const Dense*> layers() const
    {
        std::vector<const Dense*> out;
        for (const auto& l : layers_) out.push_back(&l);
        return out;
    }

private:
    std::vector<Dense> layers_;
};

} // namespace qaf
