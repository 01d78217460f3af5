from django.urls import path

from . import views

app_name = "cte"

urlpatterns = [
    path("send-batch", views.send_batch, name="send_batch"),
    path("track-batch", views.track_batch, name="track_batch"),
    path("withdraw", views.withdraw, name="withdraw"),
    path("withdraw-numbering", views.withdraw_numbering, name="withdraw_numbering"),
    path("track-status", views.track_status, name="track_status"),
    path("correct", views.correct, name="correct"),
    path("service-status", views.service_status, name="service_status"),
]
