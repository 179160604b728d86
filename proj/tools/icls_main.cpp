#include "icls/experiment.hpp"

int main(int argc, char** argv) { return icls::run_cli(argc, argv); }
