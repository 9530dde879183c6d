#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace credlens::pipeline {

struct SyntheticOptions {
    std::uint64_t seed = 20240610;
    std::size_t perTopic = 20;
    std::size_t ratersPerPost = 10;
    std::size_t raterPool = 120;
    /// Sd of the planted Gaussian noise on the latent human score.
    double noiseSd = 0.6;
    /// Sd of the post-level error in the scripted zero-shot ratings.
    double zeroShotNoiseSd = 1.3;
    std::uint32_t imageSize = 48;
};

struct SyntheticSummary {
    std::size_t posts = 0;
    std::size_t annotations = 0;
    std::size_t mockRules = 0;
    std::filesystem::path config;
};

/// Writes a complete synthetic study into `dir`: posts.jsonl, images/,
/// annotations.csv, embeddings.csv, catalog.json, mock_script.json,
/// planted.json (ground truth) and config.json. Feature scores follow
/// integer latents per post; human ratings follow a planted linear +
/// interaction function of those latents plus seeded noise. The mock script
/// is recorded by running rating, discovery and measurement against an
/// oracle that answers from request content, so replaying it through the
/// pipeline reproduces the same replies. Output bytes depend only on the
/// options.
SyntheticSummary generateSynthetic(const SyntheticOptions& options, const std::filesystem::path& dir);

}  // namespace credlens::pipeline
