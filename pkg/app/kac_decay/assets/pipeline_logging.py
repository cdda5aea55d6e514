# app/kac_decay/assets/pipeline_logging.py
import logging
import os
import time

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class PipelineLogging:
    """
    Per-run logger for a pipeline: one log file under `log_folder_path`
    plus the console. Handlers from an earlier run of the same pipeline in
    this process are replaced.
    """

    def __init__(self, pipeline_name: str, log_folder_path: str):
        self.pipeline_name = pipeline_name
        self.log_folder_path = log_folder_path
        os.makedirs(log_folder_path, exist_ok=True)
        logger = logging.getLogger(pipeline_name)
        logger.setLevel(logging.INFO)
        logger.propagate = False
        for handler in list(logger.handlers):
            logger.removeHandler(handler)
            handler.close()
        self.file_path = os.path.join(
            self.log_folder_path, f"{self.pipeline_name}_{int(time.time())}.log"
        )
        formatter = logging.Formatter(LOG_FORMAT)
        file_handler = logging.FileHandler(self.file_path)
        file_handler.setLevel(logging.INFO)
        file_handler.setFormatter(formatter)
        stream_handler = logging.StreamHandler()
        stream_handler.setLevel(logging.INFO)
        stream_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
        logger.addHandler(stream_handler)
        self.logger = logger

    def get_logs(self) -> str:
        for handler in self.logger.handlers:
            handler.flush()
        try:
            with open(self.file_path, "r") as file:
                return file.read()
        except FileNotFoundError:
            self.logger.error(f"Log file not found: {self.file_path}")
            return ""
        except OSError as e:
            self.logger.error(f"Error reading log file: {e}")
            return ""

    def close(self) -> None:
        for handler in list(self.logger.handlers):
            self.logger.removeHandler(handler)
            handler.close()
