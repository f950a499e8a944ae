#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "regrel/llm.hpp"
#include "regrel/retrieval.hpp"
#include "regrel/store.hpp"

namespace regrel {

struct ServiceProviders {
    /// Builds retrieval providers for a freshly built index. Defaults to the offline fallback.
    std::function<Providers(std::shared_ptr<const LexicalIndex>)> retrieval;
    /// Needed for judge runs; without it they are refused.
    std::shared_ptr<const ChatProvider> chat;
};

/// JSON-over-HTTP front end of a Store for the review workflow. Pipeline runs
/// execute on background threads and publish their results through the store.
class ReviewServer {
  public:
    explicit ReviewServer(Store& store, ServiceProviders providers = {},
                          std::optional<std::filesystem::path> static_dir = std::nullopt);
    ~ReviewServer();

    ReviewServer(const ReviewServer&) = delete;
    ReviewServer& operator=(const ReviewServer&) = delete;

    /// Binds to `port`, or to a free port when it is 0. Returns the bound port, or -1.
    int bind(const std::string& host, int port);
    /// Serves until stop() is called. Call bind() first.
    void serve();
    void stop();

    /// Blocks until every background run has finished.
    void wait_for_jobs();

  private:
    struct Impl;
    std::unique_ptr<Impl> m_impl;
};

}  // namespace regrel
