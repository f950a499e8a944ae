#include <algorithm>

#include "regrel/error.hpp"
#include "regrel/retrieval.hpp"

namespace regrel {

namespace {

template <typename T, typename Fn>
void for_each_chunk(const std::vector<T>& items, std::size_t chunk, Fn&& fn)
{
    for (std::size_t begin = 0; begin < items.size(); begin += chunk) {
        const auto end = std::min(items.size(), begin + chunk);
        fn(std::vector<T>(items.begin() + static_cast<std::ptrdiff_t>(begin),
                          items.begin() + static_cast<std::ptrdiff_t>(end)));
    }
}

}  // namespace

RemoteEmbeddingProvider::RemoteEmbeddingProvider(HttpEndpoint endpoint, std::size_t batch_size)
    : m_endpoint(std::move(endpoint)), m_batch_size(std::max<std::size_t>(batch_size, 1))
{}

std::string RemoteEmbeddingProvider::tag() const
{
    return "remote:" + m_endpoint.base_url;
}

std::vector<EmbeddingVector> RemoteEmbeddingProvider::embed_batch(const std::vector<std::string>& texts) const
{
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for_each_chunk(texts, m_batch_size, [&](const std::vector<std::string>& chunk) {
        const auto reply = post_json(m_endpoint, "/embed", json{{"texts", chunk}});
        try {
            const auto dim = reply.at("dim").get<std::size_t>();
            const auto& vectors = reply.at("vectors");
            if (vectors.size() != chunk.size()) {
                throw ValidationError("/embed returned " + std::to_string(vectors.size()) + " vectors for " +
                                      std::to_string(chunk.size()) + " texts");
            }
            for (const auto& v : vectors) {
                auto values = v.get<std::vector<double>>();
                if (values.size() != dim) {
                    throw ValidationError("/embed dimension mismatch: declared " + std::to_string(dim) + ", got " +
                                          std::to_string(values.size()));
                }
                out.push_back({std::move(values), {}});
            }
        } catch (const json::exception& e) {
            throw ParseError(std::string("malformed /embed reply: ") + e.what(), reply.dump());
        }
    });
    return out;
}

RemoteCrossEncoder::RemoteCrossEncoder(HttpEndpoint endpoint, std::size_t batch_size)
    : m_endpoint(std::move(endpoint)), m_batch_size(std::max<std::size_t>(batch_size, 1))
{}

std::string RemoteCrossEncoder::tag() const
{
    return "remote:" + m_endpoint.base_url;
}

std::vector<double> RemoteCrossEncoder::score_batch(const std::vector<TextPair>& pairs) const
{
    std::vector<double> out;
    out.reserve(pairs.size());
    for_each_chunk(pairs, m_batch_size, [&](const std::vector<TextPair>& chunk) {
        json body_pairs = json::array();
        for (const auto& [query, passage] : chunk) {
            body_pairs.push_back({query, passage});
        }
        const auto reply = post_json(m_endpoint, "/cross", json{{"pairs", body_pairs}});
        try {
            auto scores = reply.at("scores").get<std::vector<double>>();
            if (scores.size() != chunk.size()) {
                throw ValidationError("/cross returned " + std::to_string(scores.size()) + " scores for " +
                                      std::to_string(chunk.size()) + " pairs");
            }
            out.insert(out.end(), scores.begin(), scores.end());
        } catch (const json::exception& e) {
            throw ParseError(std::string("malformed /cross reply: ") + e.what(), reply.dump());
        }
    });
    return out;
}

Providers remote_providers_from_env()
{
    return {std::make_shared<RemoteEmbeddingProvider>(endpoint_from_env("REGREL_EMBED")),
            std::make_shared<RemoteCrossEncoder>(endpoint_from_env("REGREL_CROSS"))};
}

}  // namespace regrel
