// Writes a synthetic labeled template corpus for demos and smoke runs.
#include "synthetic_corpus.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Generate a synthetic 3-class template corpus"};
    tnz::synth::SyntheticCorpusSpec spec;
    std::string path;
    app.add_option("output", path, "Output TSV file")->required();
    app.add_option("--positive", spec.positive, "Documents labeled 1")->capture_default_str();
    app.add_option("--negative", spec.negative, "Documents labeled -1")->capture_default_str();
    app.add_option("--neutral", spec.neutral, "Documents labeled 0")->capture_default_str();
    app.add_option("--seed", spec.seed, "Generator seed")->capture_default_str();
    app.add_option("--noise", spec.cross_noise, "Chance of a cross-class word");
    CLI11_PARSE(app, argc, argv);
    try {
        const auto corpus = tnz::synth::write_synthetic_corpus(spec, path);
        std::cout << corpus.size() << " documents written to " << path << "\n";
    } catch (const std::exception& e) {
        std::cerr << "make_corpus: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
