#include "omniclip/threading.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace omniclip {
namespace {

thread_local bool g_inside_worker = false;

struct Task {
    const std::function<void(std::size_t, std::size_t)>* body = nullptr;
    std::size_t total = 0;
    std::size_t step = 0;
    std::size_t chunks = 0;
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
};

class Pool {
public:
    static Pool& instance() {
        static Pool pool;
        return pool;
    }

    std::size_t threads() const { return workers_.size() + 1; }

    void run(std::size_t n, std::size_t grain, const std::function<void(std::size_t, std::size_t)>& body) {
        std::size_t nt = threads();
        std::size_t chunks = (n + grain - 1) / grain;
        if (chunks > nt) chunks = nt;
        if (chunks <= 1 || g_inside_worker) {
            body(0, n);
            return;
        }
        auto task = std::make_shared<Task>();
        task->body = &body;
        task->total = n;
        task->step = (n + chunks - 1) / chunks;
        task->chunks = (n + task->step - 1) / task->step;
        {
            std::lock_guard<std::mutex> lk(mu_);
            task_ = task;
            ++epoch_;
        }
        cv_.notify_all();
        work_on(*task);
        std::unique_lock<std::mutex> lk(mu_);
        done_cv_.wait(lk, [&] { return task->done.load(std::memory_order_acquire) == task->chunks; });
        task_.reset();
    }

private:
    Pool() {
        std::size_t nt = 0;
        if (const char* env = std::getenv("OMNICLIP_THREADS")) nt = static_cast<std::size_t>(std::atoll(env));
        if (nt == 0) nt = std::thread::hardware_concurrency();
        if (nt == 0) nt = 1;
        for (std::size_t i = 0; i + 1 < nt; ++i)
            workers_.emplace_back([this] { worker_loop(); });
    }

    ~Pool() {
        {
            std::lock_guard<std::mutex> lk(mu_);
            stop_ = true;
            ++epoch_;
        }
        cv_.notify_all();
        for (auto& t : workers_) t.join();
    }

    void work_on(Task& task) {
        for (;;) {
            std::size_t c = task.next.fetch_add(1, std::memory_order_relaxed);
            std::size_t begin = c * task.step;
            if (begin >= task.total) break;
            (*task.body)(begin, std::min(begin + task.step, task.total));
            if (task.done.fetch_add(1, std::memory_order_acq_rel) + 1 == task.chunks) {
                std::lock_guard<std::mutex> lk(mu_);
                done_cv_.notify_all();
            }
        }
    }

    void worker_loop() {
        g_inside_worker = true;
        std::uint64_t seen = 0;
        for (;;) {
            std::shared_ptr<Task> task;
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_.wait(lk, [&] { return stop_ || epoch_ != seen; });
                seen = epoch_;
                if (stop_) return;
                task = task_;
            }
            if (task) work_on(*task);
        }
    }

    std::vector<std::thread> workers_;
    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    std::shared_ptr<Task> task_;
    std::uint64_t epoch_ = 0;
    bool stop_ = false;
};

} // namespace

std::size_t pool_threads() { return Pool::instance().threads(); }

void parallel_for(std::size_t n, std::size_t grain, const std::function<void(std::size_t, std::size_t)>& body) {
    if (n == 0) return;
    if (grain == 0) grain = 1;
    Pool::instance().run(n, grain, body);
}

} // namespace omniclip
