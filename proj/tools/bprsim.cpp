#include "bpr/cli.hpp"

int main(int argc, char** argv) { return bpr::cli::run(argc, argv); }
